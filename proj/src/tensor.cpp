#include "divnet/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "divnet/errors.hpp"
#include "divnet/linalg.hpp"

namespace divnet {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

// ---- Shape ------------------------------------------------------------------

Shape::Shape(std::initializer_list<std::size_t> dims) : Shape(std::vector<std::size_t>(dims)) {}

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
  if (dims_.empty() || dims_.size() > 2) {
    throw ShapeError("tensors have rank 1 or 2, got rank " + std::to_string(dims_.size()));
  }
}

std::size_t Shape::numel() const {
  std::size_t n = 1;
  for (auto d : dims_) n *= d;
  return dims_.empty() ? 0 : n;
}

std::string Shape::str() const {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) out << (i ? "x" : "") << dims_[i];
  out << ']';
  return out.str();
}

// ---- graph bookkeeping --------------------------------------------------------

namespace {

std::atomic<std::uint64_t> g_sequence{0};
thread_local bool t_grad_enabled = true;

NodePtr make_leaf(const Shape& shape, std::vector<double> values, bool requires_grad) {
  if (values.size() != shape.numel()) {
    throw ShapeError("tensor data length " + std::to_string(values.size()) +
                     " does not match shape " + shape.str());
  }
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  node->sequence = g_sequence.fetch_add(1, std::memory_order_relaxed);
  if (requires_grad) node->ensure_grad();
  return node;
}

// Wraps a forward result; the backward closure is attached only when some
// input takes part in differentiation.
Tensor make_result(const Shape& shape, std::vector<double> values, const char* op,
                   std::initializer_list<const Tensor*> inputs,
                   std::function<void(Node&)> backward) {
  auto node = make_leaf(shape, std::move(values), false);
  node->op = op;
  bool needs = false;
  if (t_grad_enabled) {
    for (const Tensor* t : inputs) needs = needs || t->requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    for (const Tensor* t : inputs) node->inputs.push_back(t->node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

Tensor make_result_n(const Shape& shape, std::vector<double> values, const char* op,
                     std::span<const Tensor> inputs, std::function<void(Node&)> backward) {
  auto node = make_leaf(shape, std::move(values), false);
  node->op = op;
  bool needs = false;
  if (t_grad_enabled) {
    for (const auto& t : inputs) needs = needs || t.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    for (const auto& t : inputs) node->inputs.push_back(t.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

// Gradient buffer of input i, or nullptr when that input is a constant.
double* grad_of(Node& self, std::size_t i) {
  Node& in = *self.inputs[i];
  if (!in.requires_grad) return nullptr;
  in.ensure_grad();
  return in.grad.data();
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + a.shape().str() +
                                      " vs " + b.shape().str());
}

const Node& deref(const std::shared_ptr<Node>& n) {
  if (!n) throw ContractViolation("use of an undefined tensor");
  return *n;
}

}  // namespace

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() { return t_grad_enabled; }

// ---- Tensor -------------------------------------------------------------------

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return full(shape, 0.0, requires_grad);
}

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
  return Tensor(make_leaf(shape, std::vector<double>(shape.numel(), value), requires_grad));
}

Tensor Tensor::from(const Shape& shape, std::vector<double> values, bool requires_grad) {
  return Tensor(make_leaf(shape, std::move(values), requires_grad));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows,
                      bool requires_grad) {
  const std::size_t m = rows.size();
  const std::size_t n = m ? rows.begin()->size() : 0;
  std::vector<double> values;
  values.reserve(m * n);
  for (const auto& r : rows) {
    require(r.size() == n, "Tensor::matrix: ragged rows");
    values.insert(values.end(), r.begin(), r.end());
  }
  return from(Shape::matrix(m, n), std::move(values), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from(Shape::vector(1), {value}, requires_grad);
}

Tensor Tensor::identity(std::size_t n) {
  std::vector<double> values(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) values[i * n + i] = 1.0;
  return from(Shape::matrix(n, n), std::move(values));
}

const Shape& Tensor::shape() const { return deref(node_).shape; }
std::span<const double> Tensor::data() const { return deref(node_).value; }
std::span<double> Tensor::mutable_data() {
  deref(node_);
  return node_->value;
}

std::span<const double> Tensor::grad() const {
  const Node& n = deref(node_);
  return n.grad;
}

std::span<double> Tensor::mutable_grad() {
  deref(node_);
  node_->ensure_grad();
  return node_->grad;
}

double Tensor::item() const {
  require(numel() == 1, "item() on a tensor of shape " + shape().str());
  return data()[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  require(r < rows() && c < cols(), "index out of range");
  return data()[r * cols() + c];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  deref(node_);
  node_->requires_grad = on;
  if (on) node_->ensure_grad();
}

void Tensor::zero_grad() {
  deref(node_);
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

bool Tensor::is_leaf() const { return deref(node_).inputs.empty(); }
std::uint64_t Tensor::sequence() const { return deref(node_).sequence; }
const char* Tensor::op_name() const { return deref(node_).op; }

Tensor Tensor::detach() const {
  return from(shape(), std::vector<double>(data().begin(), data().end()));
}

// ---- ComputationGraph -----------------------------------------------------------

ComputationGraph::ComputationGraph(const Tensor& root) : root_(root.node()) {
  deref(root_);
  if (!root_->requires_grad) return;
  std::unordered_set<const Node*> seen{root_.get()};
  std::vector<const Node*> stack{root_.get()};
  nodes_.push_back(root_);
  while (!stack.empty()) {
    const Node* n = stack.back();
    stack.pop_back();
    for (const auto& in : n->inputs) {
      if (!in->requires_grad || !seen.insert(in.get()).second) continue;
      nodes_.push_back(in);
      stack.push_back(in.get());
    }
  }
  // Inputs are always created before their consumers, so ascending sequence
  // numbers are an execution order.
  std::sort(nodes_.begin(), nodes_.end(),
            [](const NodePtr& a, const NodePtr& b) { return a->sequence < b->sequence; });
}

void ComputationGraph::backward(const std::function<void(const Node&)>& visit) const {
  if (root_->value.size() != 1) {
    throw ShapeError("backward requires a scalar loss, got shape " + root_->shape.str());
  }
  if (!root_->requires_grad) return;
  for (const auto& n : nodes_) {
    if (!n->inputs.empty()) n->grad.assign(n->value.size(), 0.0);
  }
  root_->ensure_grad();
  root_->grad[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (!n.backward) continue;
    if (visit) visit(n);
    n.backward(n);
  }
}

void backward(const Tensor& loss) { ComputationGraph(loss).backward(); }

// ---- linear algebra ---------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  require(b.rows() == k, "matmul: inner dimensions disagree, " + a.shape().str() + " x " +
                             b.shape().str());
  std::vector<double> out(m * n, 0.0);
  const auto av = a.data();
  const auto bv = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av[i * k + p];
      const double* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += x * brow[j];
    }
  }
  return make_result(Shape::matrix(m, n), std::move(out), "matmul", {&a, &b},
                     [m, k, n](Node& self) {
                       const double* g = self.grad.data();
                       const auto& av = self.inputs[0]->value;
                       const auto& bv = self.inputs[1]->value;
                       if (double* ga = grad_of(self, 0)) {
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t p = 0; p < k; ++p) {
                             double s = 0.0;
                             for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bv[p * n + j];
                             ga[i * k + p] += s;
                           }
                       }
                       if (double* gb = grad_of(self, 1)) {
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t p = 0; p < k; ++p) {
                             const double x = av[i * k + p];
                             for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += x * g[i * n + j];
                           }
                       }
                     });
}

Tensor transpose(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  const auto av = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return make_result(Shape::matrix(n, m), std::move(out), "transpose", {&a}, [m, n](Node& self) {
    if (double* ga = grad_of(self, 0)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += self.grad[j * m + i];
    }
  });
}

Tensor gram(const Tensor& x) {
  const std::size_t m = x.rows(), d = x.cols();
  std::vector<double> out(m * m, 0.0);
  const auto xv = x.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < d; ++p) s += xv[i * d + p] * xv[j * d + p];
      out[i * m + j] = s;
    }
  return make_result(Shape::matrix(m, m), std::move(out), "gram", {&x}, [m, d](Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    const auto& xv = self.inputs[0]->value;
    const double* g = self.grad.data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        const double w = g[i * m + j] + g[j * m + i];
        if (w == 0.0) continue;
        for (std::size_t p = 0; p < d; ++p) gx[i * d + p] += w * xv[j * d + p];
      }
  });
}

Tensor determinant(const Tensor& a) {
  const std::size_t n = a.rows();
  require(a.shape().rank() == 2 && a.cols() == n,
          "determinant: expected a square matrix, got " + a.shape().str());
  const auto factors = linalg::lu_factor(a.data(), n);
  const double det = factors.determinant();
  return make_result(Shape::vector(1), {det}, "determinant", {&a}, [n](Node& self) {
    double* ga = grad_of(self, 0);
    if (!ga) return;
    const double g = self.grad[0];
    if (g == 0.0) return;
    // d det / dA = det(A) A^{-T}; near-singular matrices are shifted by εI,
    // which keeps det·A^{-1} (the adjugate) finite.
    constexpr double kShift = 1e-8;
    auto f = linalg::lu_factor(self.inputs[0]->value, n);
    if (f.pivot_ratio() < 1e-10) {
      std::vector<double> shifted = self.inputs[0]->value;
      for (std::size_t i = 0; i < n; ++i) shifted[i * n + i] += kShift;
      f = linalg::lu_factor(shifted, n);
    }
    const double d = f.determinant();
    const auto inv = f.inverse();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g * d * inv[j * n + i];
  });
}

// ---- elementwise ----------------------------------------------------------------------

namespace {

template <class Fwd, class Bwd>
Tensor unary(const Tensor& x, const char* op, Fwd fwd, Bwd dydx) {
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  return make_result(x.shape(), std::move(out), op, {&x}, [dydx](Node& self) {
    if (double* gx = grad_of(self, 0)) {
      const auto& xv = self.inputs[0]->value;
      for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += self.grad[i] * dydx(xv[i], self.value[i]);
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_result(a.shape(), std::move(out), "add", {&a, &b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k)
      if (double* g = grad_of(self, k))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_result(a.shape(), std::move(out), "sub", {&a, &b}, [](Node& self) {
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    if (double* g = grad_of(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_result(a.shape(), std::move(out), "mul", {&a, &b}, [](Node& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < av.size(); ++i) g[i] += self.grad[i] * bv[i];
    if (double* g = grad_of(self, 1))
      for (std::size_t i = 0; i < av.size(); ++i) g[i] += self.grad[i] * av[i];
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * factor;
  return make_result(a.shape(), std::move(out), "scale", {&a}, [factor](Node& self) {
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

Tensor add_scalar(const Tensor& a, const Tensor& s) {
  require(s.numel() == 1, "add_scalar: expected a scalar, got " + s.shape().str());
  const double v = s.item();
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + v;
  return make_result(a.shape(), std::move(out), "add_scalar", {&a, &s}, [](Node& self) {
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    if (double* g = grad_of(self, 1)) {
      double total = 0.0;
      for (double x : self.grad) total += x;
      g[0] += total;
    }
  });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  const std::size_t m = a.rows(), n = a.cols();
  require(bias.numel() == n, "add_bias: bias " + bias.shape().str() + " for " + a.shape().str());
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a.data()[i * n + j] + bias.data()[j];
  return make_result(a.shape(), std::move(out), "add_bias", {&a, &bias}, [m, n](Node& self) {
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < m * n; ++i) g[i] += self.grad[i];
    if (double* g = grad_of(self, 1))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
  });
}

Tensor scale_rows(const Tensor& a, const Tensor& s) {
  const std::size_t m = a.rows(), n = a.cols();
  require(s.numel() == m, "scale_rows: " + s.shape().str() + " for " + a.shape().str());
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a.data()[i * n + j] * s.data()[i];
  return make_result(a.shape(), std::move(out), "scale_rows", {&a, &s}, [m, n](Node& self) {
    const auto& av = self.inputs[0]->value;
    const auto& sv = self.inputs[1]->value;
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[i * n + j] * sv[i];
    if (double* g = grad_of(self, 1))
      for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += self.grad[i * n + j] * av[i * n + j];
        g[i] += acc;
      }
  });
}

Tensor repeat_rows(const Tensor& row, std::size_t n_rows) {
  const std::size_t n = row.numel();
  std::vector<double> out;
  out.reserve(n_rows * n);
  for (std::size_t i = 0; i < n_rows; ++i) out.insert(out.end(), row.data().begin(), row.data().end());
  return make_result(Shape::matrix(n_rows, n), std::move(out), "repeat_rows", {&row},
                     [n, n_rows](Node& self) {
                       if (double* g = grad_of(self, 0))
                         for (std::size_t i = 0; i < n_rows; ++i)
                           for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
                     });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), p = a.cols(), q = b.cols();
  require(b.rows() == m, "concat_cols: row counts differ, " + a.shape().str() + " and " +
                             b.shape().str());
  std::vector<double> out(m * (p + q));
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(a.data().begin() + i * p, p, out.begin() + i * (p + q));
    std::copy_n(b.data().begin() + i * q, q, out.begin() + i * (p + q) + p);
  }
  return make_result(Shape::matrix(m, p + q), std::move(out), "concat_cols", {&a, &b},
                     [m, p, q](Node& self) {
                       const std::size_t w = p + q;
                       if (double* g = grad_of(self, 0))
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < p; ++j) g[i * p + j] += self.grad[i * w + j];
                       if (double* g = grad_of(self, 1))
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < q; ++j)
                             g[i * q + j] += self.grad[i * w + p + j];
                     });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  const std::size_t n = parts.front().cols();
  std::size_t m = 0;
  std::vector<std::size_t> offsets;
  for (const auto& t : parts) {
    require(t.cols() == n, "concat_rows: column counts differ, " + parts.front().shape().str() +
                               " and " + t.shape().str());
    offsets.push_back(m);
    m += t.rows();
  }
  std::vector<double> out;
  out.reserve(m * n);
  for (const auto& t : parts) out.insert(out.end(), t.data().begin(), t.data().end());
  return make_result_n(Shape::matrix(m, n), std::move(out), "concat_rows", parts,
                       [n, offsets](Node& self) {
                         for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                           double* g = grad_of(self, k);
                           if (!g) continue;
                           const std::size_t len = self.inputs[k]->value.size();
                           const double* src = self.grad.data() + offsets[k] * n;
                           for (std::size_t i = 0; i < len; ++i) g[i] += src[i];
                         }
                       });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
  const std::size_t n = a.cols();
  std::vector<double> out;
  out.reserve(rows.size() * n);
  for (auto r : rows) {
    require(r < a.rows(), "gather_rows: row " + std::to_string(r) + " out of range for " +
                              a.shape().str());
    out.insert(out.end(), a.data().begin() + r * n, a.data().begin() + (r + 1) * n);
  }
  std::vector<std::size_t> index(rows.begin(), rows.end());
  return make_result(Shape::matrix(rows.size(), n), std::move(out), "gather_rows", {&a},
                     [n, index = std::move(index)](Node& self) {
                       if (double* g = grad_of(self, 0))
                         for (std::size_t i = 0; i < index.size(); ++i)
                           for (std::size_t j = 0; j < n; ++j)
                             g[index[i] * n + j] += self.grad[i * n + j];
                     });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  const std::size_t m = a.rows(), n = a.cols();
  require(begin <= end && end <= n, "slice_cols: bad range for " + a.shape().str());
  const std::size_t w = end - begin;
  std::vector<double> out(m * w);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = a.data()[i * n + begin + j];
  return make_result(Shape::matrix(m, w), std::move(out), "slice_cols", {&a},
                     [m, n, w, begin](Node& self) {
                       if (double* g = grad_of(self, 0))
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < w; ++j)
                             g[i * n + begin + j] += self.grad[i * w + j];
                     });
}

Tensor element(const Tensor& a, std::size_t flat_index) {
  require(flat_index < a.numel(), "element: index out of range for " + a.shape().str());
  return make_result(Shape::vector(1), {a.data()[flat_index]}, "element", {&a},
                     [flat_index](Node& self) {
                       if (double* g = grad_of(self, 0)) g[flat_index] += self.grad[0];
                     });
}

// ---- row-wise nonlinearities ----------------------------------------------------------

namespace {

void softmax_backward_row(const double* y, const double* g, double* gx, std::size_t n) {
  double dot = 0.0;
  for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
  for (std::size_t j = 0; j < n; ++j) gx[j] += y[j] * (g[j] - dot);
}

}  // namespace

Tensor softmax_rows(const Tensor& x) {
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<std::uint8_t> all(m * n, 1);
  return masked_softmax_rows(x, all);
}

Tensor masked_softmax_rows(const Tensor& x, std::span<const std::uint8_t> attendable) {
  const std::size_t m = x.rows(), n = x.cols();
  require(attendable.size() == m * n, "masked_softmax_rows: mask size mismatch");
  const auto xv = x.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = xv[i * n + j];
      if (!std::isfinite(v)) throw NonFiniteError("softmax_rows: non-finite input");
      if (!attendable[i * n + j]) continue;
      any = true;
      mx = std::max(mx, v);
    }
    if (!any) throw ContractViolation("softmax_rows: row " + std::to_string(i) + " fully masked");
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!attendable[i * n + j]) continue;
      const double e = std::exp(xv[i * n + j] - mx);
      out[i * n + j] = e;
      total += e;
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= total;
  }
  return make_result(x.shape(), std::move(out), "softmax_rows", {&x}, [m, n](Node& self) {
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < m; ++i)
        softmax_backward_row(self.value.data() + i * n, self.grad.data() + i * n, g + i * n, n);
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t m = x.rows(), n = x.cols();
  require(n >= 1, "layer_norm: empty rows");
  require(gain.numel() == n && bias.numel() == n,
          "layer_norm: gain/bias width does not match " + x.shape().str());
  const auto xv = x.data();
  std::vector<double> xhat(m * n), rstd(m), out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xv[i * n + j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = xv[i * n + j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    rstd[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (xv[i * n + j] - mu) * rstd[i];
      out[i * n + j] = xhat[i * n + j] * gain.data()[j] + bias.data()[j];
    }
  }
  return make_result(x.shape(), std::move(out), "layer_norm", {&x, &gain, &bias},
                     [m, n, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
                       const auto& gv = self.inputs[1]->value;
                       const double* g = self.grad.data();
                       if (double* gg = grad_of(self, 1))
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j) gg[j] += g[i * n + j] * xhat[i * n + j];
                       if (double* gb = grad_of(self, 2))
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
                       double* gx = grad_of(self, 0);
                       if (!gx) return;
                       const double nn = static_cast<double>(n);
                       for (std::size_t i = 0; i < m; ++i) {
                         double s1 = 0.0, s2 = 0.0;
                         for (std::size_t j = 0; j < n; ++j) {
                           const double gh = g[i * n + j] * gv[j];
                           s1 += gh;
                           s2 += gh * xhat[i * n + j];
                         }
                         for (std::size_t j = 0; j < n; ++j) {
                           const double gh = g[i * n + j] * gv[j];
                           gx[i * n + j] += rstd[i] / nn * (nn * gh - s1 - xhat[i * n + j] * s2);
                         }
                       }
                     });
}

Tensor sigmoid(const Tensor& x) {
  // Inputs are clipped to ±700 and outputs to below 1 so the result stays in
  // the open interval (0, 1).
  static const double kTop = std::nextafter(1.0, 0.0);
  return unary(
      x, "sigmoid",
      [](double v) {
        v = std::clamp(v, -700.0, 700.0);
        const double y = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
        return std::min(y, kTop);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary(
      x, "clamp", [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

// ---- reductions ----------------------------------------------------------------------

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_result(Shape::vector(1), {total}, "sum", {&x}, [](Node& self) {
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < self.inputs[0]->value.size(); ++i) g[i] += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  require(x.numel() > 0, "mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor weighted_sum(const Tensor& x, std::span<const double> weights) {
  require(weights.size() == x.numel(), "weighted_sum: weight count mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] != 0.0) total += weights[i] * x.data()[i];
  }
  std::vector<double> w(weights.begin(), weights.end());
  return make_result(Shape::vector(1), {total}, "weighted_sum", {&x}, [w = std::move(w)](Node& self) {
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < w.size(); ++i) g[i] += self.grad[0] * w[i];
  });
}

Tensor normalize_sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  if (!(total != 0.0) || !std::isfinite(total)) {
    throw NonFiniteError("normalize_sum: total is zero or non-finite");
  }
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] / total;
  return make_result(x.shape(), std::move(out), "normalize_sum", {&x}, [total](Node& self) {
    double* g = grad_of(self, 0);
    if (!g) return;
    double dot = 0.0;
    for (std::size_t i = 0; i < self.value.size(); ++i) dot += self.grad[i] * self.value[i];
    for (std::size_t i = 0; i < self.value.size(); ++i) g[i] += (self.grad[i] - dot) / total;
  });
}

Tensor rowwise_dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "rowwise_dot");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += a.data()[i * n + j] * b.data()[i * n + j];
    out[i] = s;
  }
  return make_result(Shape::matrix(m, 1), std::move(out), "rowwise_dot", {&a, &b},
                     [m, n](Node& self) {
                       const auto& av = self.inputs[0]->value;
                       const auto& bv = self.inputs[1]->value;
                       if (double* g = grad_of(self, 0))
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[i] * bv[i * n + j];
                       if (double* g = grad_of(self, 1))
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[i] * av[i * n + j];
                     });
}

Tensor normalize_rows(const Tensor& x) {
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * n, 0.0), norms(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += x.data()[i * n + j] * x.data()[i * n + j];
    norms[i] = std::sqrt(s);
    if (norms[i] == 0.0) continue;
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.data()[i * n + j] / norms[i];
  }
  return make_result(x.shape(), std::move(out), "normalize_rows", {&x},
                     [m, n, norms = std::move(norms)](Node& self) {
                       double* g = grad_of(self, 0);
                       if (!g) return;
                       for (std::size_t i = 0; i < m; ++i) {
                         if (norms[i] == 0.0) continue;
                         double dot = 0.0;
                         for (std::size_t j = 0; j < n; ++j) dot += self.grad[i * n + j] * self.value[i * n + j];
                         for (std::size_t j = 0; j < n; ++j)
                           g[i * n + j] += (self.grad[i * n + j] - self.value[i * n + j] * dot) / norms[i];
                       }
                     });
}

Tensor cosine_rows(const Tensor& a, const Tensor& b) {
  require(a.numel() == b.numel(), "cosine_rows: length mismatch, " + a.shape().str() + " vs " +
                                      b.shape().str());
  const std::size_t n = a.numel();
  double dot = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    dot += a.data()[i] * b.data()[i];
    aa += a.data()[i] * a.data()[i];
    bb += b.data()[i] * b.data()[i];
  }
  const double na = std::sqrt(aa), nb = std::sqrt(bb);
  const bool degenerate = na == 0.0 || nb == 0.0;
  const double c = degenerate ? 0.0 : std::clamp(dot / (na * nb), -1.0, 1.0);
  return make_result(Shape::vector(1), {c}, "cosine_rows", {&a, &b},
                     [n, na, nb, c, degenerate](Node& self) {
                       if (degenerate) return;
                       const auto& av = self.inputs[0]->value;
                       const auto& bv = self.inputs[1]->value;
                       const double g = self.grad[0];
                       if (double* ga = grad_of(self, 0))
                         for (std::size_t i = 0; i < n; ++i)
                           ga[i] += g * (bv[i] / (na * nb) - c * av[i] / (na * na));
                       if (double* gb = grad_of(self, 1))
                         for (std::size_t i = 0; i < n; ++i)
                           gb[i] += g * (av[i] / (na * nb) - c * bv[i] / (nb * nb));
                     });
}

Tensor bce_with_logits(const Tensor& logits, std::span<const double> targets) {
  require(targets.size() == logits.numel(), "bce_with_logits: target count mismatch");
  const std::size_t n = logits.numel();
  require(n > 0, "bce_with_logits: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = logits.data()[i];
    total += std::max(z, 0.0) - z * targets[i] + std::log1p(std::exp(-std::abs(z)));
  }
  std::vector<double> t(targets.begin(), targets.end());
  return make_result(Shape::vector(1), {total / static_cast<double>(n)}, "bce_with_logits",
                     {&logits}, [t = std::move(t)](Node& self) {
                       double* g = grad_of(self, 0);
                       if (!g) return;
                       const auto& zv = self.inputs[0]->value;
                       const double w = self.grad[0] / static_cast<double>(zv.size());
                       for (std::size_t i = 0; i < zv.size(); ++i) {
                         const double z = zv[i];
                         const double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                                                   : std::exp(z) / (1.0 + std::exp(z));
                         g[i] += w * (p - t[i]);
                       }
                     });
}

}  // namespace divnet
