#include "divnet/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "divnet/errors.hpp"
#include "divnet/linalg.hpp"
#include "divnet/metrics.hpp"
#include "divnet/optim.hpp"
#include "divnet/rng.hpp"

namespace divnet {

namespace {

std::vector<double> cosine_matrix(const RankingInstance& inst) {
  const std::size_t n = inst.num_items;
  std::vector<double> norms(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (double v : inst.item_row(i)) s += v * v;
    norms[i] = std::sqrt(s);
  }
  std::vector<double> s(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    s[i * n + i] = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      double dot = 0.0;
      const auto a = inst.item_row(i), b = inst.item_row(j);
      for (std::size_t k = 0; k < a.size(); ++k) dot += a[k] * b[k];
      const double c = (norms[i] == 0.0 || norms[j] == 0.0) ? 0.0 : dot / (norms[i] * norms[j]);
      s[i * n + j] = s[j * n + i] = c;
    }
  }
  return s;
}

void require_utilities(const RankingInstance& inst, std::span<const double> utilities) {
  if (utilities.size() != inst.num_items)
    throw ShapeError("baseline: " + std::to_string(utilities.size()) + " utilities for " +
                     std::to_string(inst.num_items) + " items");
}

Tensor item_user_input(const RankingInstance& inst) {
  Tensor x = Tensor::from(Shape::matrix(inst.num_items, inst.item_dim), inst.item_features);
  if (!inst.user_features.empty()) {
    const Tensor user = Tensor::from(Shape::matrix(1, inst.user_features.size()), inst.user_features);
    x = concat_cols(x, repeat_rows(user, inst.num_items));
  }
  return x;
}

std::vector<double> click_targets(const RankingInstance& inst) {
  return std::vector<double>(inst.clicks.begin(), inst.clicks.end());
}

Tensor uniform_param(const Shape& shape, Rng& rng) {
  std::vector<double> v(shape.numel());
  for (auto& x : v) x = rng.uniform(-0.1, 0.1);
  return Tensor::from(shape, std::move(v), true);
}

template <typename Loss>
void adam_epochs(std::span<const RankingInstance> train_set, std::size_t epochs,
                 std::size_t batch_size, double lr, std::uint64_t seed, std::vector<Tensor> params,
                 Loss&& instance_loss, const std::function<void()>& after_epoch) {
  if (train_set.empty()) throw ConfigError("baseline training: empty training split");
  if (batch_size < 1) throw ConfigError("baseline training: batch_size must be >= 1");
  AdamOptions options;
  options.learning_rate = lr;
  Adam adam(options);
  Rng rng(seed ^ 0x2545f4914f6cdd1dULL);
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t e = 0; e < epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
      const std::size_t end = std::min(order.size(), begin + batch_size);
      Tensor total;
      for (std::size_t i = begin; i < end; ++i) {
        const Tensor l = instance_loss(train_set[order[i]]);
        total = total.defined() ? add(total, l) : l;
      }
      total = scale(total, 1.0 / static_cast<double>(end - begin));
      if (!std::isfinite(total.item()))
        throw NonFiniteError("non-finite baseline loss in batch starting at query '" +
                             train_set[order[begin]].query_id + "'");
      backward(total);
      adam.step(params);
    }
    if (after_epoch) after_epoch();
  }
}

}  // namespace

Permutation rank_by_scores(std::span<const double> scores) {
  Permutation order = identity_permutation(scores.size());
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

PointwiseScorer PointwiseScorer::initialize(std::size_t item_dim, std::size_t user_dim,
                                            std::size_t hidden, std::uint64_t seed) {
  if (item_dim + user_dim == 0 || hidden == 0)
    throw ConfigError("pointwise scorer: input width and hidden width must be positive");
  Rng rng(seed);
  PointwiseScorer s;
  s.item_dim_ = item_dim;
  s.user_dim_ = user_dim;
  s.hidden_ = hidden;
  s.w1_ = uniform_param(Shape::matrix(item_dim + user_dim, hidden), rng);
  s.b1_ = uniform_param(Shape::vector(hidden), rng);
  s.w2_ = uniform_param(Shape::matrix(hidden, 1), rng);
  s.b2_ = uniform_param(Shape::vector(1), rng);
  return s;
}

Tensor PointwiseScorer::logits(const RankingInstance& inst) const {
  if (inst.item_dim != item_dim_ || inst.user_features.size() != user_dim_)
    throw ConfigError("pointwise scorer expects item/user widths " + std::to_string(item_dim_) +
                      "/" + std::to_string(user_dim_) + ", instance '" + inst.query_id +
                      "' has " + std::to_string(inst.item_dim) + "/" +
                      std::to_string(inst.user_features.size()));
  const Tensor h = relu(add_bias(matmul(item_user_input(inst), w1_), b1_));
  return add_scalar(matmul(h, w2_), b2_);
}

std::vector<double> PointwiseScorer::utilities(const RankingInstance& inst) const {
  NoGradGuard no_grad;
  const Tensor u = sigmoid(logits(inst));
  return {u.data().begin(), u.data().end()};
}

std::vector<std::pair<std::string, Tensor>> PointwiseScorer::named_parameters() const {
  return {{"hidden.weight", w1_}, {"hidden.bias", b1_}, {"out.weight", w2_}, {"out.bias", b2_}};
}

std::vector<Tensor> PointwiseScorer::parameters() const { return {w1_, b1_, w2_, b2_}; }

PointwiseScorer PointwiseScorer::from_tensors(std::size_t item_dim, std::size_t user_dim,
                                              std::vector<std::pair<std::string, Tensor>> tensors) {
  PointwiseScorer s;
  s.item_dim_ = item_dim;
  s.user_dim_ = user_dim;
  for (auto& [name, t] : tensors) {
    t.set_requires_grad(true);
    if (name == "hidden.weight") s.w1_ = t;
    else if (name == "hidden.bias") s.b1_ = t;
    else if (name == "out.weight") s.w2_ = t;
    else if (name == "out.bias") s.b2_ = t;
    else throw ConfigError("pointwise scorer: unexpected tensor '" + name + "'");
  }
  if (!s.w1_.defined() || !s.b1_.defined() || !s.w2_.defined() || !s.b2_.defined())
    throw ConfigError("pointwise scorer: missing tensors");
  if (s.w1_.rows() != item_dim + user_dim || s.w2_.rows() != s.w1_.cols() || s.w2_.cols() != 1 ||
      s.b1_.numel() != s.w1_.cols() || s.b2_.numel() != 1)
    throw ShapeError("pointwise scorer: inconsistent tensor shapes");
  s.hidden_ = s.w1_.cols();
  return s;
}

PointwiseScorer train_pointwise(std::span<const RankingInstance> train_set,
                                std::span<const RankingInstance> validation_set,
                                const PointwiseConfig& config) {
  if (train_set.empty()) throw ConfigError("train_pointwise: empty training split");
  const auto& first = train_set.front();
  PointwiseScorer scorer = PointwiseScorer::initialize(first.item_dim, first.user_features.size(),
                                                       config.hidden, config.seed);
  auto snapshot = [](const PointwiseScorer& s) {
    auto named = s.named_parameters();
    for (auto& [name, t] : named) t = t.detach();
    return PointwiseScorer::from_tensors(s.item_dim(), s.user_dim(), std::move(named));
  };
  PointwiseScorer best = snapshot(scorer);
  double best_score = -std::numeric_limits<double>::infinity();
  auto validate = [&] {
    if (validation_set.empty()) {
      best = snapshot(scorer);
      return;
    }
    EvalOptions options;
    options.cutoffs = {10};
    options.include_ild = false;
    const double score =
        evaluate([&](const RankingInstance& i) { return pointwise_rank(i, scorer); },
                 validation_set, options)
            .value("ndcg", 10);
    if (score > best_score) {
      best_score = score;
      best = snapshot(scorer);
    }
  };
  validate();
  adam_epochs(
      train_set, config.epochs, config.batch_size, config.learning_rate, config.seed,
      scorer.parameters(),
      [&](const RankingInstance& inst) {
        const auto targets = click_targets(inst);
        return bce_with_logits(scorer.logits(inst), targets);
      },
      validate);
  return best;
}

Permutation pointwise_rank(const RankingInstance& inst, const PointwiseScorer& scorer) {
  return rank_by_scores(scorer.utilities(inst));
}

Permutation submodular_greedy(const RankingInstance& inst, std::span<const double> utilities,
                              double gamma) {
  require_utilities(inst, utilities);
  if (!(gamma >= 0.0)) throw ConfigError("submodular_greedy: gamma must be >= 0");
  const std::size_t n = inst.num_items;
  const auto sim = cosine_matrix(inst);
  std::vector<double> max_sim(n, 0.0);  // max cosine to the selected set
  std::vector<bool> taken(n, false);
  Permutation order;
  for (std::size_t t = 0; t < n; ++t) {
    std::size_t best = n;
    double best_gain = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < n; ++c) {
      if (taken[c]) continue;
      const double gain = utilities[c] - (t == 0 ? 0.0 : gamma * max_sim[c]);
      if (best == n || gain > best_gain) {
        best = c;
        best_gain = gain;
      }
    }
    taken[best] = true;
    order.push_back(best);
    for (std::size_t c = 0; c < n; ++c)
      max_sim[c] = t == 0 ? sim[c * n + best] : std::max(max_sim[c], sim[c * n + best]);
  }
  return order;
}

Permutation dpp_greedy(const RankingInstance& inst, std::span<const double> utilities) {
  require_utilities(inst, utilities);
  const std::size_t n = inst.num_items;
  std::vector<double> u(utilities.begin(), utilities.end());
  if (std::any_of(u.begin(), u.end(), [](double v) { return !(v > 0.0); }))
    for (auto& v : u) v = 1.0 / (1.0 + std::exp(-v));
  const auto sim = cosine_matrix(inst);

  auto log_det = [&](const std::vector<std::size_t>& items) {
    const std::size_t k = items.size();
    std::vector<double> sub(k * k);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j)
        sub[i * k + j] = u[items[i]] * sim[items[i] * n + items[j]] * u[items[j]];
    const double det = linalg::lu_determinant(sub, k);
    return det > 0.0 ? std::log(det) : -std::numeric_limits<double>::infinity();
  };

  std::vector<bool> taken(n, false);
  Permutation order;
  double current = 0.0;  // log det of the empty kernel
  while (order.size() < n) {
    std::size_t best = n;
    double best_value = -std::numeric_limits<double>::infinity();
    std::vector<std::size_t> trial = order;
    trial.push_back(0);
    for (std::size_t c = 0; c < n; ++c) {
      if (taken[c]) continue;
      trial.back() = c;
      const double value = log_det(trial);
      if (best == n || value > best_value) {
        best = c;
        best_value = value;
      }
    }
    if (!(best_value - current > kDppGainFloor)) break;
    taken[best] = true;
    order.push_back(best);
    current = best_value;
  }
  if (order.size() < n) {
    for (std::size_t c : rank_by_scores(u))
      if (!taken[c]) order.push_back(c);
  }
  return order;
}

Tensor prm_logits(const RankingInstance& inst, const DivNetParams& params) {
  const Tensor encoded = encode_instance(inst, params);
  const Tensor values = matmul(encoded, params.decoder_value);
  return sigmoid(add_scalar(matmul(values, params.head_weight), params.head_bias));
}

Permutation prm_rank(const RankingInstance& inst, const DivNetParams& params) {
  NoGradGuard no_grad;
  const Tensor y = prm_logits(inst, params);
  return rank_by_scores(y.data());
}

DivNetParams train_prm(std::span<const RankingInstance> train_set,
                       std::span<const RankingInstance> validation_set, const ModelConfig& model,
                       const PrmConfig& config) {
  DivNetParams params = DivNetParams::initialize(model, config.seed);
  DivNetParams best = params.clone();
  double best_score = -std::numeric_limits<double>::infinity();
  auto validate = [&] {
    if (validation_set.empty()) {
      best = params.clone();
      return;
    }
    EvalOptions options;
    options.cutoffs = {10};
    options.include_ild = false;
    const double score = evaluate([&](const RankingInstance& i) { return prm_rank(i, params); },
                                  validation_set, options)
                             .value("ndcg", 10);
    if (score > best_score) {
      best_score = score;
      best = params.clone();
    }
  };
  validate();
  adam_epochs(
      train_set, config.epochs, config.batch_size, config.learning_rate, config.seed,
      params.parameters(),
      [&](const RankingInstance& inst) {
        // The head output is already a probability; the BCE is taken on its
        // pre-sigmoid value.
        const Tensor encoded = encode_instance(inst, params);
        const Tensor z = add_scalar(matmul(matmul(encoded, params.decoder_value), params.head_weight),
                                    params.head_bias);
        const auto targets = click_targets(inst);
        return bce_with_logits(z, targets);
      },
      validate);
  return best;
}

}  // namespace divnet
