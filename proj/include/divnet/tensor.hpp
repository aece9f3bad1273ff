#pragma once

// Dense rank-1/rank-2 tensors with reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle to a shared graph node. Operations on tensors
// that require gradients record their inputs and a backward closure, so the
// executed operations form a ComputationGraph rooted at whatever scalar the
// caller differentiates. Every kernel is a plain sequential loop: identical
// inputs always give bit-identical outputs.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace divnet {

class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims);
  explicit Shape(std::vector<std::size_t> dims);

  static Shape matrix(std::size_t rows, std::size_t cols) { return Shape{rows, cols}; }
  static Shape vector(std::size_t n) { return Shape{n}; }

  std::size_t rank() const { return dims_.size(); }
  const std::vector<std::size_t>& dims() const { return dims_; }
  // Rank-1 tensors are viewed as a single row.
  std::size_t rows() const { return dims_.size() == 2 ? dims_[0] : 1; }
  std::size_t cols() const { return dims_.empty() ? 0 : dims_.back(); }
  std::size_t numel() const;
  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;

 private:
  std::vector<std::size_t> dims_;
};

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, double value, bool requires_grad = false);
  static Tensor from(const Shape& shape, std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor identity(std::size_t n);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rows() const { return shape().rows(); }
  std::size_t cols() const { return shape().cols(); }
  std::size_t numel() const { return shape().numel(); }

  std::span<const double> data() const;
  // Direct write access, for optimizers and finite-difference probes. Writing
  // through this does not invalidate downstream graph nodes.
  std::span<double> mutable_data();
  std::span<const double> grad() const;
  std::span<double> mutable_grad();

  double item() const;
  double at(std::size_t r, std::size_t c) const;
  double operator[](std::size_t i) const { return data()[i]; }

  bool requires_grad() const;
  void set_requires_grad(bool on);
  void zero_grad();
  bool is_leaf() const;
  std::uint64_t sequence() const;
  const char* op_name() const;

  // Copy of the values with no graph history.
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::uint64_t sequence = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// The operations reachable from a root, in execution order.
class ComputationGraph {
 public:
  explicit ComputationGraph(const Tensor& root);

  const std::vector<std::shared_ptr<detail::Node>>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }

  // Replays the chain rule in reverse execution order, each recorded
  // operation exactly once. Intermediate gradients are reset first; leaf
  // gradients accumulate. `visit`, when set, observes each node replayed.
  void backward(const std::function<void(const detail::Node&)>& visit = {}) const;

 private:
  std::shared_ptr<detail::Node> root_;
  std::vector<std::shared_ptr<detail::Node>> nodes_;
};

// d(loss)/d(t) is added into t.grad for every tensor t with requires_grad.
void backward(const Tensor& loss);

// ---- primitive operations --------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, const Tensor& s);
// Adds a length-n bias to each row of an m×n matrix.
Tensor add_bias(const Tensor& a, const Tensor& bias);
// Multiplies row i of an m×n matrix by s[i] (s is m×1).
Tensor scale_rows(const Tensor& a, const Tensor& s);
// A 1×n row stacked n_rows times.
Tensor repeat_rows(const Tensor& row, std::size_t n_rows);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor element(const Tensor& a, std::size_t flat_index);

Tensor softmax_rows(const Tensor& x);
// Softmax over the entries with attendable[r*cols+c] != 0; other entries
// receive exactly zero weight and zero gradient.
Tensor masked_softmax_rows(const Tensor& x, std::span<const std::uint8_t> attendable);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor log(const Tensor& x);
Tensor clamp(const Tensor& x, double lo, double hi);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Σ_i weights[i]·x[i] with constant weights.
Tensor weighted_sum(const Tensor& x, std::span<const double> weights);
// x / Σ x
Tensor normalize_sum(const Tensor& x);
// m×n, m×n -> m×1 of per-row dot products.
Tensor rowwise_dot(const Tensor& a, const Tensor& b);
// Rows scaled to unit L2 norm; all-zero rows stay zero.
Tensor normalize_rows(const Tensor& x);
// x·xᵀ
Tensor gram(const Tensor& x);
// Cosine similarity of two single-row tensors; 0 when either has zero norm.
Tensor cosine_rows(const Tensor& a, const Tensor& b);
Tensor determinant(const Tensor& a);
// Mean binary cross-entropy of sigmoid(logits) against 0/1 targets.
Tensor bce_with_logits(const Tensor& logits, std::span<const double> targets);

}  // namespace divnet
