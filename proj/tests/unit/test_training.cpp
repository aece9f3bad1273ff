#include <gtest/gtest.h>

#include <cmath>

#include "divnet/checkpoint.hpp"
#include "divnet/errors.hpp"
#include "divnet/synthetic.hpp"
#include "divnet/training.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"

using namespace divnet;

namespace {

SlateDecode forced_decode(const RankingInstance& inst, const DivNetParams& params, Permutation order,
                          double alpha = 0.3) {
  DecodeOptions options;
  options.mode = DecodeMode::Forced;
  options.forced = std::move(order);
  options.alpha = alpha;
  return decode_slate(inst, params, options);
}

std::vector<RankingInstance> synthetic_set(std::size_t n, std::uint64_t seed, std::size_t items = 5) {
  SyntheticConfig cfg;
  cfg.num_items = items;
  cfg.seed = seed;
  return generate_synthetic(cfg, n).instances;
}

ModelConfig synthetic_model() {
  SyntheticConfig cfg;
  return check::small_model(cfg.feature_width(), 0, 6);
}

TrainConfig quick_config() {
  TrainConfig c;
  c.batch_size = 8;
  c.samples_per_instance = 2;
  c.max_epochs = 3;
  c.seed = 5;
  return c;
}

bool same_values(const DivNetParams& a, const DivNetParams& b) {
  const auto pa = a.parameters(), pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (!std::equal(pa[i].data().begin(), pa[i].data().end(), pb[i].data().begin())) return false;
  return true;
}

}  // namespace

TEST(NdcgReward, Fixtures) {
  auto inst = check::random_instance(3, 2, 0, 1);
  const auto params = DivNetParams::initialize(check::small_model(2, 0), 1);
  inst.clicks = {1, 1, 0};
  // Decode order [0, 2, 1] puts the labels in order [1, 0, 1].
  EXPECT_NEAR(ndcg_reward(forced_decode(inst, params, {0, 2, 1}), inst.clicks), 0.9197, 1e-4);
  EXPECT_EQ(ndcg_reward(forced_decode(inst, params, {1, 0, 2}), inst.clicks), 1.0);
  inst.clicks = {0, 0, 0};
  EXPECT_EQ(ndcg_reward(forced_decode(inst, params, {1, 0, 2}), inst.clicks), 0.0);
}

TEST(StepWeight, LogDiscountAndUniform) {
  EXPECT_EQ(step_weight(1, StepWeightMode::LogDiscount), 1.0);
  EXPECT_EQ(step_weight(3, StepWeightMode::LogDiscount), 0.5);
  EXPECT_EQ(step_weight(7, StepWeightMode::Uniform), 1.0);
}

TEST(ReinforceLoss, RejectsGreedyDecodes) {
  const auto inst = check::random_instance(3, 2, 0, 1);
  const auto params = DivNetParams::initialize(check::small_model(2, 0), 1);
  const std::vector<SlateDecode> decodes{decode_slate(inst, params, {})};
  const double rewards[] = {1.0};
  EXPECT_THROW(reinforce_loss(decodes, rewards, BaselineMode::None), ContractViolation);
  EXPECT_NO_THROW(reinforce_loss(decodes, rewards, BaselineMode::None, true));
}

TEST(ReinforceLoss, SingleTrajectoryIsNegativeLogProb) {
  const auto inst = check::random_instance(4, 2, 0, 2);
  const auto params = DivNetParams::initialize(check::small_model(2, 0), 2);
  DecodeOptions options;
  options.mode = DecodeMode::Sample;
  options.seed = 3;
  const std::vector<SlateDecode> decodes{decode_slate(inst, params, options)};
  const double rewards[] = {1.0};
  EXPECT_EQ(reinforce_loss(decodes, rewards, BaselineMode::None).item(), -decodes[0].log_prob.item());
}

TEST(ReinforceLoss, EqualRewardsWithBaselineGiveZeroGradient) {
  const auto inst = check::random_instance(4, 2, 0, 2);
  auto params = DivNetParams::initialize(check::small_model(2, 0), 2);
  std::vector<SlateDecode> decodes;
  for (std::uint64_t s = 0; s < 3; ++s) {
    DecodeOptions options;
    options.mode = DecodeMode::Sample;
    options.seed = s;
    decodes.push_back(decode_slate(inst, params, options));
  }
  const double rewards[] = {0.7, 0.7, 0.7};
  const Tensor loss = reinforce_loss(decodes, rewards, BaselineMode::BatchMean);
  EXPECT_EQ(loss.item(), 0.0);
  params.zero_grad();
  backward(loss);
  for (const auto& p : params.parameters())
    for (double g : p.grad()) EXPECT_EQ(g, 0.0);
}

TEST(ReinforceLoss, GradientMatchesFiniteDifferencesWithFrozenPaths) {
  const auto inst = check::random_instance(4, 3, 1, 7);
  auto params = DivNetParams::initialize(check::small_model(3, 1, 4), 7);
  std::vector<Permutation> paths;
  for (std::uint64_t s = 0; s < 3; ++s) {
    DecodeOptions options;
    options.mode = DecodeMode::Sample;
    options.seed = s;
    options.alpha = 0.4;
    paths.push_back(decode_slate(inst, params, options).permutation);
  }
  const std::vector<double> rewards{0.2, 0.9, 0.5};
  auto loss = [&] {
    std::vector<SlateDecode> decodes;
    for (const auto& p : paths) decodes.push_back(forced_decode(inst, params, p, 0.4));
    return reinforce_loss(decodes, rewards, BaselineMode::BatchMean);
  };
  const auto r = check::check_gradients(loss, params.parameters());
  EXPECT_LT(r.max_error, 1e-4) << r.worst;
}

TEST(SupervisedLoss, AllNegativeLabelsGiveZero) {
  auto inst = check::random_instance(4, 2, 0, 1);
  inst.clicks = {0, 0, 0, 0};
  const auto params = DivNetParams::initialize(check::small_model(2, 0), 1);
  EXPECT_EQ(supervised_step_loss(forced_decode(inst, params, {3, 1, 0, 2}), inst.clicks,
                                 StepWeightMode::LogDiscount)
                .item(),
            0.0);
}

TEST(SupervisedLoss, TwoItemHandExpansion) {
  auto inst = check::random_instance(2, 2, 0, 4);
  inst.clicks = {1, 0};
  const auto params = DivNetParams::initialize(check::small_model(2, 0), 4);
  // Path [0, 1]: only step 1 has a positive candidate.
  const auto d = forced_decode(inst, params, {0, 1});
  const double p = d.steps[0].probabilities[0];
  EXPECT_NEAR(supervised_step_loss(d, inst.clicks, StepWeightMode::LogDiscount).item(), -std::log(p), 1e-15);
  // Path [1, 0]: step 2 contributes -w_2 log 1 = 0.
  const auto e = forced_decode(inst, params, {1, 0});
  EXPECT_NEAR(supervised_step_loss(e, inst.clicks, StepWeightMode::LogDiscount).item(),
              -std::log(e.steps[0].probabilities[0]), 1e-15);
}

TEST(SupervisedLoss, UsesTheDecodeProbabilitiesDirectly) {
  auto inst = check::random_instance(4, 2, 0, 6);
  inst.clicks = {1, 0, 1, 1};
  const auto params = DivNetParams::initialize(check::small_model(2, 0), 6);
  const auto d = forced_decode(inst, params, {2, 0, 1, 3});
  double expected = 0.0;
  for (std::size_t t = 0; t < d.steps.size(); ++t) {
    const auto& step = d.steps[t];
    for (std::size_t i = 0; i < step.candidates.size(); ++i)
      if (inst.clicks[step.candidates[i]])
        expected -= step_weight(t + 1, StepWeightMode::LogDiscount) * std::log(step.probabilities[i]);
  }
  EXPECT_NEAR(supervised_step_loss(d, inst.clicks, StepWeightMode::LogDiscount).item(), expected, 1e-12);
}

TEST(CombinedLoss, Arithmetic) {
  EXPECT_NEAR(combined_loss(Tensor::scalar(0.3), Tensor::scalar(0.2), 0.5).item(), 0.4, 1e-15);
  EXPECT_EQ(combined_loss(Tensor::scalar(0.3), Tensor::scalar(0.2), 0.0).item(), 0.3);
  double previous = -INFINITY;
  for (double lambda : {0.0, 0.1, 1.0, 10.0, 1000.0}) {
    const double v = combined_loss(Tensor::scalar(0.3), Tensor::scalar(0.2), lambda).item();
    EXPECT_GT(v, previous);
    previous = v;
  }
}

TEST(BatchLoss, FullObjectiveGradientOnFourItemSlate) {
  auto inst = check::random_instance(4, 3, 1, 11);
  inst.clicks = {1, 0, 1, 0};
  auto params = DivNetParams::initialize(check::small_model(3, 1, 4), 11);
  TrainConfig config;
  config.alpha = 0.5;
  config.lambda = 0.7;
  config.samples_per_instance = 3;
  // Freeze the sampled paths, then differentiate through forced replays.
  std::vector<Permutation> paths;
  {
    Rng rng(3);
    for (std::size_t s = 0; s < 3; ++s) {
      DecodeOptions options;
      options.mode = DecodeMode::Sample;
      options.seed = rng.next_u64();
      options.alpha = config.alpha;
      paths.push_back(decode_slate(inst, params, options).permutation);
    }
  }
  auto loss = [&] {
    std::vector<SlateDecode> decodes;
    std::vector<double> rewards;
    std::vector<Tensor> sup;
    for (const auto& p : paths) {
      decodes.push_back(forced_decode(inst, params, p, config.alpha));
      rewards.push_back(ndcg_reward(decodes.back(), inst.clicks));
    }
    Tensor s = supervised_step_loss(decodes[0], inst.clicks, config.step_weights);
    for (std::size_t i = 1; i < decodes.size(); ++i)
      s = add(s, supervised_step_loss(decodes[i], inst.clicks, config.step_weights));
    return combined_loss(reinforce_loss(decodes, rewards, config.baseline), scale(s, 1.0 / 3), config.lambda);
  };
  const auto r = check::check_gradients(loss, params.parameters());
  EXPECT_LT(r.max_error, 1e-4) << r.worst;
}

TEST(Train, ZeroEpochsKeepsInitialization) {
  const auto data = synthetic_set(12, 1);
  auto config = quick_config();
  config.max_epochs = 0;
  const auto state = train(data, data, synthetic_model(), config);
  EXPECT_TRUE(same_values(state.params, DivNetParams::initialize(synthetic_model(), config.seed)));
  EXPECT_TRUE(same_values(state.best_params, state.params));
}

TEST(Train, NoSignalNoSupervisionLeavesParametersUnchanged) {
  auto data = synthetic_set(10, 2);
  for (auto& inst : data) {
    std::fill(inst.clicks.begin(), inst.clicks.end(), 0);
    std::fill(inst.grades.begin(), inst.grades.end(), 0);
  }
  auto config = quick_config();
  config.lambda = 0.0;
  config.max_epochs = 1;
  const auto state = train(data, {}, synthetic_model(), config);
  EXPECT_TRUE(same_values(state.params, DivNetParams::initialize(synthetic_model(), config.seed)));
}

TEST(Train, SameSeedSameResult) {
  const auto data = synthetic_set(20, 3);
  const auto a = train(data, data, synthetic_model(), quick_config());
  const auto b = train(data, data, synthetic_model(), quick_config());
  EXPECT_EQ(a.best_score, b.best_score);
  EXPECT_TRUE(same_values(a.params, b.params));
}

TEST(Train, ResumeFromCheckpointIsBitIdentical) {
  const auto data = synthetic_set(20, 4);
  auto config = quick_config();
  config.max_epochs = 4;
  config.patience = 0;
  const auto straight = train(data, data, synthetic_model(), config);

  config.max_epochs = 2;
  auto first = train(data, data, synthetic_model(), config);
  const std::string saved = serialize_checkpoint(make_training_checkpoint(first));
  auto resumed = restore_training(parse_checkpoint(saved));
  resumed.config.max_epochs = 4;
  run_training(resumed, data, data);
  EXPECT_EQ(resumed.epoch, 4u);
  EXPECT_TRUE(same_values(straight.params, resumed.params));
  EXPECT_TRUE(same_values(straight.best_params, resumed.best_params));
  EXPECT_EQ(straight.best_score, resumed.best_score);
}

TEST(Train, EarlyStoppingHonorsPatience) {
  const auto data = synthetic_set(10, 5);
  auto config = quick_config();
  config.max_epochs = 50;
  config.patience = 2;
  config.learning_rate = 1e-9;  // nothing improves
  std::size_t epochs = 0;
  const auto state = train(data, data, synthetic_model(), config, [&](const EpochRecord&) { ++epochs; });
  EXPECT_EQ(epochs, 2u);
  EXPECT_TRUE(state.finished());
  EXPECT_EQ(state.best_epoch, 0u);
}

TEST(Train, NonFiniteInputNamesTheQuery) {
  auto data = synthetic_set(4, 6);
  data[2].item_features[1] = NAN;
  auto config = quick_config();
  config.batch_size = 4;
  try {
    train(data, {}, synthetic_model(), config);
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find(data[2].query_id), std::string::npos) << e.what();
  }
}

TEST(Train, AblationModesRun) {
  const auto data = synthetic_set(12, 7);
  auto config = quick_config();
  config.max_epochs = 1;
  config.greedy_decode = true;
  EXPECT_NO_THROW(train(data, data, synthetic_model(), config));
  config.greedy_decode = false;
  config.supervision = SupervisionTrajectory::LoggedOrder;
  config.step_weights = StepWeightMode::Uniform;
  config.baseline = BaselineMode::None;
  EXPECT_NO_THROW(train(data, data, synthetic_model(), config));
}

TEST(Train, InvalidConfigRejected) {
  auto config = quick_config();
  config.lambda = -1.0;
  EXPECT_THROW(config.validate(), ConfigError);
  config = quick_config();
  config.samples_per_instance = 0;
  EXPECT_THROW(config.validate(), ConfigError);
  EXPECT_THROW(train({}, {}, synthetic_model(), quick_config()), ConfigError);
}

TEST(Train, EpochRecordsAreLineJson) {
  const auto data = synthetic_set(8, 8);
  auto config = quick_config();
  config.max_epochs = 1;
  std::vector<nlohmann::json> lines;
  train(data, data, synthetic_model(), config, [&](const EpochRecord& r) { lines.push_back(r.to_json(true)); });
  ASSERT_EQ(lines.size(), 1u);
  for (const char* key : {"epoch", "reinforce_loss", "supervised_loss", "val_ndcg@10", "val_map@10", "wall_seconds"})
    EXPECT_TRUE(lines[0].contains(key)) << key;
  EXPECT_FALSE(EpochRecord{}.to_json(false).contains("wall_seconds"));
}

TEST(Baseline, MeanRewardBaselineLeavesExpectedGradientUnchanged) {
  // Score-function identity: E[∇ log P(π)] = 0, so subtracting a constant
  // baseline from every reward leaves the mean gradient within Monte-Carlo
  // error of the unbaselined one.
  const auto inst = check::random_instance(3, 2, 0, 9);
  auto params = DivNetParams::initialize(check::small_model(2, 0, 3), 9);
  const std::vector<int> labels{1, 0, 1};
  const std::size_t n = 10000;
  std::vector<std::vector<double>> grads;
  std::vector<double> rewards;
  for (std::size_t s = 0; s < n; ++s) {
    DecodeOptions options;
    options.mode = DecodeMode::Sample;
    options.seed = s + 1;
    options.alpha = 0.5;
    const auto d = decode_slate(inst, params, options);
    params.zero_grad();
    backward(d.log_prob);
    std::vector<double> g;
    for (const Tensor* t : {&params.head_weight, &params.decoder_value})
      g.insert(g.end(), t->grad().begin(), t->grad().end());
    grads.push_back(std::move(g));
    rewards.push_back(ndcg_reward(d, labels));
  }
  double b = 0.0;
  for (double r : rewards) b += r;
  b /= n;
  const std::size_t dims = grads[0].size();
  for (std::size_t j = 0; j < dims; ++j) {
    double sum_plain = 0.0, sum_base = 0.0, sum_diff = 0.0, sum_diff_sq = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      sum_plain += rewards[s] * grads[s][j];
      sum_base += (rewards[s] - b) * grads[s][j];
      const double diff = b * grads[s][j];
      sum_diff += diff;
      sum_diff_sq += diff * diff;
    }
    const double mean_diff = sum_diff / n;
    const double se = std::sqrt((sum_diff_sq / n - mean_diff * mean_diff) / n);
    EXPECT_LE(std::abs(sum_plain / n - sum_base / n), 3.0 * se + 1e-12) << "coordinate " << j;
  }
}

TEST(Train, LearnsOnPlantedDiversityData) {
  SyntheticConfig cfg;
  cfg.num_items = 8;
  cfg.seed = 21;
  const auto data = generate_synthetic(cfg, 260).instances;
  const std::vector<RankingInstance> train_set(data.begin(), data.begin() + 200);
  const std::vector<RankingInstance> val(data.begin() + 200, data.end());
  ModelConfig model = check::small_model(cfg.feature_width(), 0, 16);
  TrainConfig config;
  config.batch_size = 16;
  config.max_epochs = 30;
  config.alpha = 0.5;
  config.seed = 1;
  const auto state = train(train_set, val, model, config);
  const double before = validation_ndcg(DivNetParams::initialize(model, config.seed), val, config.alpha, 5);
  const double after = validation_ndcg(state.best_params, val, config.alpha, 5);
  EXPECT_GE(after - before, 0.05) << "before " << before << " after " << after;
}
