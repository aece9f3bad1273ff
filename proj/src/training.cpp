#include "divnet/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "divnet/errors.hpp"
#include "divnet/metrics.hpp"

namespace divnet {

namespace {

Tensor sum_scalars(const std::vector<Tensor>& terms) {
  Tensor acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return acc;
}

const std::vector<int>& reward_labels(const RankingInstance& inst, const TrainConfig& config) {
  return config.graded_reward ? inst.grades : inst.clicks;
}

void require_finite(double value, const std::string& what) {
  if (!std::isfinite(value)) throw NonFiniteError("non-finite " + what);
}

void require_finite(double value, const std::string& what, const std::string& query_id) {
  if (!std::isfinite(value))
    throw NonFiniteError("non-finite " + what + " on query '" + query_id + "'");
}

}  // namespace

const char* to_string(StepWeightMode mode) {
  return mode == StepWeightMode::Uniform ? "uniform" : "log-discount";
}
const char* to_string(BaselineMode mode) {
  return mode == BaselineMode::None ? "none" : "batch-mean";
}
const char* to_string(SupervisionTrajectory mode) {
  return mode == SupervisionTrajectory::Sampled ? "sampled" : "logged-order";
}

StepWeightMode parse_step_weight_mode(const std::string& text) {
  if (text == "uniform") return StepWeightMode::Uniform;
  if (text == "log-discount") return StepWeightMode::LogDiscount;
  throw ConfigError("unknown step weight mode '" + text + "' (uniform|log-discount)");
}
BaselineMode parse_baseline_mode(const std::string& text) {
  if (text == "none") return BaselineMode::None;
  if (text == "batch-mean") return BaselineMode::BatchMean;
  throw ConfigError("unknown baseline mode '" + text + "' (none|batch-mean)");
}
SupervisionTrajectory parse_supervision_trajectory(const std::string& text) {
  if (text == "sampled") return SupervisionTrajectory::Sampled;
  if (text == "logged-order") return SupervisionTrajectory::LoggedOrder;
  throw ConfigError("unknown supervision trajectory '" + text + "' (sampled|logged-order)");
}

void TrainConfig::validate() const {
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (samples_per_instance < 1) throw ConfigError("samples_per_instance must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"alpha", alpha},
          {"lambda", lambda},
          {"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"samples_per_instance", samples_per_instance},
          {"step_weights", to_string(step_weights)},
          {"baseline", to_string(baseline)},
          {"supervision", to_string(supervision)},
          {"greedy_decode", greedy_decode},
          {"reward_cutoff", reward_cutoff},
          {"graded_reward", graded_reward},
          {"seed", seed},
          {"max_epochs", max_epochs},
          {"patience", patience}};
}

double step_weight(std::size_t step, StepWeightMode mode) {
  if (step < 1) throw ConfigError("step_weight: steps count from 1");
  if (mode == StepWeightMode::Uniform) return 1.0;
  return 1.0 / std::log2(static_cast<double>(step) + 1.0);
}

double ndcg_reward(const SlateDecode& decode, std::span<const int> labels, std::size_t cutoff) {
  if (labels.size() != decode.permutation.size())
    throw ShapeError("ndcg_reward: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(decode.permutation.size()) + " items");
  if (decode.permutation.empty()) return 0.0;
  const auto ranked = labels_in_order(labels, decode.permutation);
  return ndcg_at_k(ranked, cutoff == 0 ? ranked.size() : cutoff);
}

Tensor reinforce_loss(std::span<const SlateDecode> decodes, std::span<const double> rewards,
                      BaselineMode baseline, bool allow_greedy) {
  if (decodes.empty()) throw ContractViolation("reinforce_loss: no trajectories");
  if (decodes.size() != rewards.size())
    throw ShapeError("reinforce_loss: " + std::to_string(decodes.size()) + " trajectories but " +
                     std::to_string(rewards.size()) + " rewards");
  double b = 0.0;
  if (baseline == BaselineMode::BatchMean) {
    // Mean taken relative to the first reward so equal rewards centre to
    // exactly zero.
    double offset = 0.0;
    for (double r : rewards) offset += r - rewards.front();
    b = rewards.front() + offset / static_cast<double>(rewards.size());
  }
  std::vector<Tensor> terms;
  terms.reserve(decodes.size());
  for (std::size_t s = 0; s < decodes.size(); ++s) {
    const auto& d = decodes[s];
    if (d.mode == DecodeMode::Greedy && !allow_greedy)
      throw ContractViolation("reinforce_loss: greedy decodes do not give a Monte-Carlo estimate");
    if (!d.log_prob.defined()) throw ContractViolation("reinforce_loss: decode has no log_prob");
    terms.push_back(scale(d.log_prob, -(rewards[s] - b)));
  }
  return scale(sum_scalars(terms), 1.0 / static_cast<double>(decodes.size()));
}

Tensor supervised_step_loss(const SlateDecode& decode, std::span<const int> labels,
                            StepWeightMode mode) {
  if (labels.size() != decode.permutation.size())
    throw ShapeError("supervised_step_loss: label count does not match slate size");
  std::vector<Tensor> terms;
  for (std::size_t t = 0; t < decode.steps.size(); ++t) {
    const auto& step = decode.steps[t];
    std::vector<double> weights(step.candidates.size(), 0.0);
    bool any = false;
    const double w = step_weight(t + 1, mode);
    for (std::size_t i = 0; i < step.candidates.size(); ++i) {
      const int label = labels[step.candidates[i]];
      if (label > 0) {
        weights[i] = -w * static_cast<double>(label);
        any = true;
      }
    }
    if (any) terms.push_back(weighted_sum(log(step.probabilities), weights));
  }
  if (terms.empty()) return Tensor::scalar(0.0);
  return sum_scalars(terms);
}

Tensor combined_loss(const Tensor& reinforce, const Tensor& supervised, double lambda) {
  if (lambda < 0.0) throw ConfigError("combined_loss: lambda must be >= 0");
  return add(reinforce, scale(supervised, lambda));
}

BatchLoss batch_loss(std::span<const RankingInstance* const> batch, const DivNetParams& params,
                     const TrainConfig& config, Rng& rng) {
  if (batch.empty()) throw ContractViolation("batch_loss: empty batch");
  const double inv_batch = 1.0 / static_cast<double>(batch.size());

  std::vector<Tensor> reinforce_terms;
  std::vector<Tensor> supervised_terms;
  std::vector<SlateDecode> greedy_decodes;
  std::vector<double> greedy_rewards;

  for (const RankingInstance* inst : batch) {
    try {
      const auto& labels = reward_labels(*inst, config);
      std::vector<SlateDecode> decodes;
      DecodeOptions options;
      options.alpha = config.alpha;
      if (config.greedy_decode) {
        options.mode = DecodeMode::Greedy;
        decodes.push_back(decode_slate(*inst, params, options));
      } else {
        options.mode = DecodeMode::Sample;
        for (std::size_t s = 0; s < config.samples_per_instance; ++s) {
          options.seed = rng.next_u64();
          decodes.push_back(decode_slate(*inst, params, options));
        }
      }
      std::vector<double> rewards;
      for (const auto& d : decodes) rewards.push_back(ndcg_reward(d, labels, config.reward_cutoff));

      Tensor supervised;
      if (config.supervision == SupervisionTrajectory::LoggedOrder) {
        DecodeOptions forced;
        forced.alpha = config.alpha;
        forced.mode = DecodeMode::Forced;
        forced.forced = inst->display_order.empty() ? identity_permutation(inst->num_items)
                                                    : inst->display_order;
        supervised = supervised_step_loss(decode_slate(*inst, params, forced), inst->clicks,
                                          config.step_weights);
      } else {
        std::vector<Tensor> per_path;
        for (const auto& d : decodes)
          per_path.push_back(supervised_step_loss(d, inst->clicks, config.step_weights));
        supervised = scale(sum_scalars(per_path), 1.0 / static_cast<double>(per_path.size()));
      }
      require_finite(supervised.item(), "supervised loss");
      supervised_terms.push_back(supervised);

      if (config.greedy_decode) {
        greedy_rewards.push_back(rewards.front());
        greedy_decodes.push_back(std::move(decodes.front()));
      } else {
        Tensor r = reinforce_loss(decodes, rewards, config.baseline);
        require_finite(r.item(), "reinforce loss");
        reinforce_terms.push_back(r);
      }
    } catch (const NonFiniteError& e) {
      throw NonFiniteError("query '" + inst->query_id + "': " + e.what());
    }
  }

  Tensor reinforce;
  if (config.greedy_decode) {
    // One trajectory per instance: the baseline is shared across the batch.
    reinforce = reinforce_loss(greedy_decodes, greedy_rewards, config.baseline, true);
    require_finite(reinforce.item(), "reinforce loss", batch.front()->query_id);
  } else {
    reinforce = scale(sum_scalars(reinforce_terms), inv_batch);
  }
  const Tensor supervised = scale(sum_scalars(supervised_terms), inv_batch);

  BatchLoss out;
  out.reinforce = reinforce.item();
  out.supervised = supervised.item();
  out.total = combined_loss(reinforce, supervised, config.lambda);
  return out;
}

nlohmann::json EpochRecord::to_json(bool with_wall_time) const {
  nlohmann::json j = {{"epoch", epoch},
                      {"reinforce_loss", reinforce_loss},
                      {"supervised_loss", supervised_loss},
                      {"loss", total_loss},
                      {"val_ndcg@10", validation_ndcg10},
                      {"val_map@10", validation_map10},
                      {"improved", improved}};
  if (with_wall_time) j["wall_seconds"] = wall_seconds;
  return j;
}

bool TrainState::finished() const {
  if (epoch >= config.max_epochs) return true;
  return config.patience > 0 && stale_epochs >= config.patience;
}

TrainState init_training(const ModelConfig& model, const TrainConfig& config) {
  config.validate();
  model.validate();
  TrainState state;
  state.model = model;
  state.config = config;
  state.params = DivNetParams::initialize(model, config.seed);
  state.best_params = state.params.clone();
  AdamOptions adam;
  adam.learning_rate = config.learning_rate;
  state.optimizer = Adam(adam);
  // Separate stream from the initializer so batch order does not depend on
  // the parameter count.
  state.rng = Rng(config.seed ^ 0x5bd1e995a5a5a5a5ULL);
  return state;
}

double validation_ndcg(const DivNetParams& params, std::span<const RankingInstance> instances,
                       double alpha, std::size_t k) {
  if (instances.empty()) return 0.0;
  EvalOptions options;
  options.cutoffs = {k};
  options.include_ild = false;
  const auto report = evaluate(
      [&](const RankingInstance& inst) { return greedy_rank(inst, params, alpha); }, instances,
      options);
  return report.value("ndcg", k);
}

void run_training(TrainState& state, std::span<const RankingInstance> train_set,
                  std::span<const RankingInstance> validation_set, const EpochCallback& on_epoch) {
  if (train_set.empty()) throw ConfigError("train: empty training split");
  const auto& config = state.config;

  auto score = [&](const DivNetParams& params, double* map10) {
    if (validation_set.empty()) return 0.0;
    EvalOptions options;
    options.cutoffs = {10};
    options.include_ild = false;
    const auto report = evaluate(
        [&](const RankingInstance& inst) { return greedy_rank(inst, params, config.alpha); },
        validation_set, options);
    if (map10) *map10 = report.value("map", 10);
    return report.value("ndcg", 10);
  };

  if (state.epoch == 0 && !std::isfinite(state.best_score)) {
    state.best_score = score(state.params, nullptr);
    state.best_params = state.params.clone();
    state.best_epoch = 0;
  }

  std::vector<Tensor> params = state.params.parameters();
  while (!state.finished()) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[state.rng.below(i)]);

    EpochRecord record;
    record.epoch = state.epoch + 1;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      std::vector<const RankingInstance*> batch;
      for (std::size_t i = begin; i < end; ++i) batch.push_back(&train_set[order[i]]);
      BatchLoss loss = batch_loss(batch, state.params, config, state.rng);
      require_finite(loss.total.item(), "loss", batch.front()->query_id);
      backward(loss.total);
      for (const auto& p : params)
        for (double g : p.grad())
          if (!std::isfinite(g))
            throw NonFiniteError("non-finite gradient in batch starting at query '" +
                                 batch.front()->query_id + "'");
      state.optimizer.step(params);
      record.reinforce_loss += loss.reinforce;
      record.supervised_loss += loss.supervised;
      record.total_loss += loss.total.item();
      ++batches;
    }
    record.reinforce_loss /= static_cast<double>(batches);
    record.supervised_loss /= static_cast<double>(batches);
    record.total_loss /= static_cast<double>(batches);

    ++state.epoch;
    record.validation_ndcg10 = score(state.params, &record.validation_map10);
    if (validation_set.empty() || record.validation_ndcg10 > state.best_score) {
      state.best_score = record.validation_ndcg10;
      state.best_params = state.params.clone();
      state.best_epoch = state.epoch;
      state.stale_epochs = 0;
      record.improved = true;
    } else {
      ++state.stale_epochs;
    }
    record.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (on_epoch) on_epoch(record);
  }
}

TrainState train(std::span<const RankingInstance> train_set,
                 std::span<const RankingInstance> validation_set, const ModelConfig& model,
                 const TrainConfig& config, const EpochCallback& on_epoch) {
  TrainState state = init_training(model, config);
  run_training(state, train_set, validation_set, on_epoch);
  return state;
}

}  // namespace divnet
