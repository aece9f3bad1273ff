#pragma once

// Comparison rerankers: a pointwise scorer, two greedy diversity heuristics
// over its utilities, and a one-pass attention scorer sharing DivNet's
// encoder and output head.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "divnet/instance.hpp"
#include "divnet/model.hpp"

namespace divnet {

// Descending by score, ties toward the lower index.
Permutation rank_by_scores(std::span<const double> scores);

struct PointwiseConfig {
  std::size_t hidden = 64;
  double learning_rate = 0.01;
  std::size_t epochs = 20;
  std::size_t batch_size = 256;  // instances per update
  std::uint64_t seed = 0;
};

// relu([items, user] W1 + b1) W2 + b2, read through a sigmoid as utility.
class PointwiseScorer {
 public:
  PointwiseScorer() = default;
  static PointwiseScorer initialize(std::size_t item_dim, std::size_t user_dim,
                                    std::size_t hidden, std::uint64_t seed);

  std::size_t item_dim() const { return item_dim_; }
  std::size_t user_dim() const { return user_dim_; }
  std::size_t hidden() const { return hidden_; }

  Tensor logits(const RankingInstance& inst) const;       // N × 1
  std::vector<double> utilities(const RankingInstance& inst) const;

  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
  // Rebuilds a scorer from named tensors as produced by named_parameters().
  static PointwiseScorer from_tensors(std::size_t item_dim, std::size_t user_dim,
                                      std::vector<std::pair<std::string, Tensor>> tensors);

 private:
  std::size_t item_dim_ = 0, user_dim_ = 0, hidden_ = 0;
  Tensor w1_, b1_, w2_, b2_;
};

// Per-item binary cross-entropy on the click labels with Adam. When a
// validation set is given, the epoch with the best NDCG@10 is returned.
PointwiseScorer train_pointwise(std::span<const RankingInstance> train_set,
                                std::span<const RankingInstance> validation_set,
                                const PointwiseConfig& config);

Permutation pointwise_rank(const RankingInstance& inst, const PointwiseScorer& scorer);

// Greedy marginal gain u_c - γ · max_{j selected} cos(x_c, x_j) over raw
// item features.
Permutation submodular_greedy(const RankingInstance& inst, std::span<const double> utilities,
                              double gamma);

inline constexpr double kDppGainFloor = -30.0;

// Greedy MAP on L = diag(u) S diag(u), S the cosine Gram of the item rows.
// Once the best log-det gain drops to kDppGainFloor the rest follow by
// utility. Non-positive utilities are passed through a sigmoid first.
Permutation dpp_greedy(const RankingInstance& inst, std::span<const double> utilities);

// One-pass utilities from the encoder and output head: each item is scored
// as if it were the first pick of the decoder.
Tensor prm_logits(const RankingInstance& inst, const DivNetParams& params);  // N × 1, in (0, 1)
Permutation prm_rank(const RankingInstance& inst, const DivNetParams& params);

struct PrmConfig {
  double learning_rate = 0.01;
  std::size_t epochs = 20;
  std::size_t batch_size = 256;
  std::uint64_t seed = 0;
};

// Trains encoder + head with per-item cross-entropy on the click labels.
DivNetParams train_prm(std::span<const RankingInstance> train_set,
                       std::span<const RankingInstance> validation_set, const ModelConfig& model,
                       const PrmConfig& config);

}  // namespace divnet
