#pragma once

// Policy-gradient training of DivNet: an NDCG-rewarded REINFORCE term plus a
// position-discounted per-step cross-entropy on the click labels.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "divnet/instance.hpp"
#include "divnet/model.hpp"
#include "divnet/optim.hpp"
#include "divnet/rng.hpp"
#include "json.hpp"

namespace divnet {

enum class StepWeightMode { Uniform, LogDiscount };
enum class BaselineMode { None, BatchMean };
enum class SupervisionTrajectory { Sampled, LoggedOrder };

const char* to_string(StepWeightMode mode);
const char* to_string(BaselineMode mode);
const char* to_string(SupervisionTrajectory mode);
StepWeightMode parse_step_weight_mode(const std::string& text);
BaselineMode parse_baseline_mode(const std::string& text);
SupervisionTrajectory parse_supervision_trajectory(const std::string& text);

struct TrainConfig {
  double alpha = 0.1;
  double lambda = 0.1;
  double learning_rate = 0.01;
  std::size_t batch_size = 256;
  std::size_t samples_per_instance = 4;
  StepWeightMode step_weights = StepWeightMode::LogDiscount;
  BaselineMode baseline = BaselineMode::BatchMean;
  SupervisionTrajectory supervision = SupervisionTrajectory::Sampled;
  // Trains on the greedy decode instead of sampled trajectories.
  bool greedy_decode = false;
  std::size_t reward_cutoff = 0;  // 0 rewards the full list
  bool graded_reward = false;
  std::uint64_t seed = 0;
  std::size_t max_epochs = 30;
  std::size_t patience = 5;  // 0 disables early stopping
  bool record_wall_time = true;

  void validate() const;
  nlohmann::json to_json() const;
};

double step_weight(std::size_t step, StepWeightMode mode);  // step counts from 1

// NDCG of the labels in decode order; full list when cutoff is 0.
double ndcg_reward(const SlateDecode& decode, std::span<const int> labels, std::size_t cutoff = 0);

// -(1/S) Σ_s (R_s - b) log P(π_s), with b the mean of `rewards` under
// BatchMean. Greedy decodes are rejected unless allow_greedy is set.
Tensor reinforce_loss(std::span<const SlateDecode> decodes, std::span<const double> rewards,
                      BaselineMode baseline, bool allow_greedy = false);

// Σ_t w_t · (-Σ_{c ∈ R_t} label_c log P_t(c)) along the decode's own path.
Tensor supervised_step_loss(const SlateDecode& decode, std::span<const int> labels,
                            StepWeightMode mode);

Tensor combined_loss(const Tensor& reinforce, const Tensor& supervised, double lambda);

struct BatchLoss {
  Tensor total;
  double reinforce = 0.0;
  double supervised = 0.0;
};

// Decodes every instance of the batch and assembles the training objective.
// Trajectory seeds are drawn from `rng`.
BatchLoss batch_loss(std::span<const RankingInstance* const> batch, const DivNetParams& params,
                     const TrainConfig& config, Rng& rng);

struct EpochRecord {
  std::size_t epoch = 0;
  double reinforce_loss = 0.0;
  double supervised_loss = 0.0;
  double total_loss = 0.0;
  double validation_ndcg10 = 0.0;
  double validation_map10 = 0.0;
  double wall_seconds = 0.0;
  bool improved = false;

  nlohmann::json to_json(bool with_wall_time) const;
};

struct TrainState {
  ModelConfig model;
  TrainConfig config;
  DivNetParams params;
  DivNetParams best_params;
  Adam optimizer;
  std::size_t epoch = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  std::size_t stale_epochs = 0;
  Rng rng;

  bool finished() const;
};

TrainState init_training(const ModelConfig& model, const TrainConfig& config);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Runs epochs until max_epochs or early stopping. Can be called again on a
// restored state to resume.
void run_training(TrainState& state, std::span<const RankingInstance> train_set,
                  std::span<const RankingInstance> validation_set, const EpochCallback& on_epoch = {});

TrainState train(std::span<const RankingInstance> train_set,
                 std::span<const RankingInstance> validation_set, const ModelConfig& model,
                 const TrainConfig& config, const EpochCallback& on_epoch = {});

// Mean greedy-decode NDCG@k over the instances.
double validation_ndcg(const DivNetParams& params, std::span<const RankingInstance> instances,
                       double alpha, std::size_t k);

}  // namespace divnet
