#pragma once

// The DivNet slate reranker: a self-attention encoder over the candidate
// list followed by a causal decoder that picks one item per step. Each
// step's selection probability mixes the decoder's utility estimate with a
// determinant bonus that grows as the candidate becomes less similar to the
// items already placed.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "divnet/instance.hpp"
#include "divnet/tensor.hpp"

namespace divnet {

struct ModelConfig {
  std::size_t item_dim = 0;  // continuous item features, M
  std::size_t user_dim = 0;  // user context features, K
  std::size_t key_dim = 64;
  std::size_t value_dim = 64;
  std::size_t num_blocks = 1;
  // Hash-bucketed embeddings for integer item codes; 0 fields disables them.
  std::size_t categorical_fields = 0;
  std::size_t categorical_buckets = std::size_t{1} << 16;
  std::size_t categorical_width = 8;

  // Width of the encoder input rows and of the position embedding.
  std::size_t input_width() const {
    return item_dim + categorical_fields * categorical_width + user_dim;
  }
  void validate() const;
};

struct EncoderBlock {
  Tensor query;   // in × D_K
  Tensor key;     // in × D_K
  Tensor value;   // in × D_V
  Tensor output;  // D_V × D_K
  Tensor norm_gain;
  Tensor norm_bias;
};

// All trainable weights. Copies share storage; use clone() for a snapshot.
struct DivNetParams {
  ModelConfig config;
  std::vector<EncoderBlock> blocks;
  Tensor decoder_query;  // D_K × D_K
  Tensor decoder_key;    // D_K × D_K
  Tensor decoder_value;  // D_K × D_V
  Tensor head_weight;    // D_V × 1
  Tensor head_bias;      // scalar
  Tensor categorical_table;

  // Weights uniform in [-0.1, 0.1]; layer-norm gains start at 1, biases at 0.
  static DivNetParams initialize(const ModelConfig& config, std::uint64_t seed);

  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
  DivNetParams clone() const;
  void zero_grad();
};

// Row r may attend to columns 0..r.
class CausalMask {
 public:
  explicit CausalMask(std::size_t size);
  std::size_t size() const { return size_; }
  bool attendable(std::size_t row, std::size_t col) const { return col <= row; }
  std::span<const std::uint8_t> pattern() const { return pattern_; }

 private:
  std::size_t size_;
  std::vector<std::uint8_t> pattern_;
};

// Sinusoidal position table: even columns sin(i / 10000^(2⌊j/2⌋/L)), odd
// columns cos of the same angle, positions counted from 0.
Tensor positional_encoding(std::size_t num_positions, std::size_t width);

// X = [items, categorical embeddings, user context repeated per row] + Z.
Tensor build_input(const RankingInstance& inst, const Tensor& positions, const DivNetParams& params);

// Self-attention encoding of X, one row per item (N × D_K).
Tensor encode(const Tensor& input, const DivNetParams& params);

// build_input with the standard position table, then encode.
Tensor encode_instance(const RankingInstance& inst, const DivNetParams& params);

struct DecodeStepOutput {
  Tensor embedding;                // 1 × D_V, the decoder output for the candidate
  Tensor logit;                    // scalar utility y in (0, 1)
  std::vector<double> attention;   // weights over prefix items then the candidate
};

// Reference decoder step that recomputes attention over the full prefix.
// decode_slate uses a cached equivalent that agrees with this bit for bit.
DecodeStepOutput decode_step(std::span<const std::size_t> prefix, std::size_t candidate,
                             const Tensor& encoded, const DivNetParams& params,
                             const CausalMask& mask);

// Determinant of the cosine kernel over prefix rows plus the candidate row,
// clamped to [0, 1]. A lone candidate scores 1.
Tensor diversity_det(std::span<const Tensor> prefix_embeddings, const Tensor& candidate);

// (y_c + α·det_c) / Σ (y + α·det) as an m×1 tensor.
Tensor selection_probabilities(const Tensor& logits, const Tensor& dets, double alpha);

enum class DecodeMode { Greedy, Sample, Forced };

const char* to_string(DecodeMode mode);

struct DecodeStep {
  std::vector<std::size_t> candidates;  // remaining items, ascending
  Tensor probabilities;                 // |candidates| × 1, graph-connected
  std::vector<double> logits;
  std::vector<double> dets;      // clamped to [0, 1]
  std::vector<double> raw_dets;  // before clamping
  std::size_t chosen = 0;        // index into candidates
  std::vector<double> attention; // chosen item over earlier selections and itself
};

struct SlateDecode {
  DecodeMode mode = DecodeMode::Greedy;
  double alpha = 0.0;
  Permutation permutation;
  std::vector<DecodeStep> steps;
  std::vector<double> step_probabilities;
  std::vector<double> step_logits;
  std::vector<double> step_determinants;
  Tensor selected_embeddings;  // N × D_V in selection order, frozen at selection
  std::vector<double> kernel;  // N × N cosine kernel of the selected embeddings
  Tensor log_prob;             // Σ_t log P_t(π_t)
};

struct DecodeOptions {
  double alpha = 0.1;
  DecodeMode mode = DecodeMode::Greedy;
  std::uint64_t seed = 0;             // sample mode only
  Permutation forced;                 // forced mode only
};

SlateDecode decode_slate(const RankingInstance& inst, const DivNetParams& params,
                         const DecodeOptions& options);

// Greedy decode without recording a graph; the permutation only.
Permutation greedy_rank(const RankingInstance& inst, const DivNetParams& params, double alpha);

// N × N row-major matrix; row t holds the attention of the item chosen at
// step t over the items chosen at steps 0..t.
std::vector<double> export_attention(const SlateDecode& decode);

}  // namespace divnet
