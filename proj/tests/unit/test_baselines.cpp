#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "divnet/baselines.hpp"
#include "divnet/errors.hpp"
#include "divnet/linalg.hpp"
#include "divnet/synthetic.hpp"
#include "fixtures.hpp"

using namespace divnet;

namespace {

RankingInstance rows_instance(std::vector<std::vector<double>> rows) {
  RankingInstance inst;
  inst.query_id = "q";
  inst.num_items = rows.size();
  inst.item_dim = rows.front().size();
  for (auto& r : rows) inst.item_features.insert(inst.item_features.end(), r.begin(), r.end());
  inst.clicks.assign(rows.size(), 0);
  inst.grades.assign(rows.size(), 0);
  inst.display_order = identity_permutation(rows.size());
  return inst;
}

std::size_t position_of(const Permutation& p, std::size_t item) {
  return static_cast<std::size_t>(std::find(p.begin(), p.end(), item) - p.begin());
}

double cosine(std::span<const double> a, std::span<const double> b) {
  double d = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return (na == 0 || nb == 0) ? 0.0 : d / std::sqrt(na * nb);
}

}  // namespace

TEST(RankByScores, Fixtures) {
  const double equal[] = {0.4, 0.4, 0.4};
  EXPECT_EQ(rank_by_scores(equal), (Permutation{0, 1, 2}));
  const double s[] = {0.1, 0.9, 0.5};
  EXPECT_EQ(rank_by_scores(s), (Permutation{1, 2, 0}));
  const double monotone[] = {std::exp(0.1), std::exp(0.9), std::exp(0.5)};
  EXPECT_EQ(rank_by_scores(monotone), rank_by_scores(s));
}

TEST(Pointwise, ScoresAreFiniteAndTrainingHelps) {
  SyntheticConfig cfg;
  cfg.num_items = 8;
  cfg.seed = 3;
  const auto data = generate_synthetic(cfg, 240).instances;
  const std::vector<RankingInstance> train_set(data.begin(), data.begin() + 200);
  const std::vector<RankingInstance> val(data.begin() + 200, data.end());
  PointwiseConfig pc;
  pc.hidden = 16;
  pc.epochs = 10;
  pc.batch_size = 16;
  const auto scorer = train_pointwise(train_set, val, pc);
  for (const auto& inst : val)
    for (double u : scorer.utilities(inst)) {
      EXPECT_TRUE(std::isfinite(u));
      EXPECT_GT(u, 0.0);
      EXPECT_LT(u, 1.0);
    }
  // The attractiveness channel is the last feature; the trained scorer
  // should rank by it far better than chance.
  double agree = 0, total = 0;
  for (const auto& inst : val) {
    const auto u = scorer.utilities(inst);
    for (std::size_t i = 0; i < inst.num_items; ++i)
      for (std::size_t j = i + 1; j < inst.num_items; ++j) {
        const double da = inst.item_row(i).back() - inst.item_row(j).back();
        if (std::abs(da) < 0.2) continue;
        agree += (da > 0) == (u[i] > u[j]);
        total += 1;
      }
  }
  EXPECT_GT(agree / total, 0.8);
}

TEST(Pointwise, RejectsMismatchedWidths) {
  const auto scorer = PointwiseScorer::initialize(3, 0, 4, 1);
  EXPECT_THROW(scorer.utilities(check::random_instance(2, 4, 0, 1)), ConfigError);
}

TEST(Submodular, ZeroGammaEqualsPointwiseOrder) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto inst = check::random_instance(7, 3, 0, seed);
    Rng rng(seed);
    std::vector<double> u(7);
    for (auto& v : u) v = rng.uniform();
    u[3] = u[5];  // a tie
    EXPECT_EQ(submodular_greedy(inst, u, 0.0), rank_by_scores(u));
  }
}

TEST(Submodular, SeparatesTopDuplicates) {
  const auto inst = rows_instance({{1, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  const double u[] = {0.9, 0.85, 0.5, 0.4};
  const auto p = submodular_greedy(inst, u, 5.0);
  EXPECT_GT(position_of(p, 1) - position_of(p, 0), 1u);
  EXPECT_EQ(rank_by_scores(u), (Permutation{0, 1, 2, 3}));  // adjacent without diversity
}

TEST(Submodular, PrefixMatchesNaiveReevaluation) {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    Rng rng(seed);
    const std::size_t n = 3 + rng.below(5);
    const auto inst = check::random_instance(n, 3, 0, seed);
    std::vector<double> u(n);
    for (auto& v : u) v = rng.uniform();
    const double gamma = rng.uniform(0.0, 2.0);
    const auto p = submodular_greedy(inst, u, gamma);
    Permutation prefix;
    for (std::size_t t = 0; t < 3; ++t) {
      std::size_t best = n;
      double best_gain = -INFINITY;
      for (std::size_t c = 0; c < n; ++c) {
        if (std::find(prefix.begin(), prefix.end(), c) != prefix.end()) continue;
        double max_sim = 0.0;
        for (std::size_t j = 0; j < prefix.size(); ++j)
          max_sim = j == 0 ? cosine(inst.item_row(c), inst.item_row(prefix[j]))
                           : std::max(max_sim, cosine(inst.item_row(c), inst.item_row(prefix[j])));
        const double gain = u[c] - gamma * max_sim;
        if (gain > best_gain) {
          best_gain = gain;
          best = c;
        }
      }
      prefix.push_back(best);
    }
    EXPECT_TRUE(std::equal(prefix.begin(), prefix.end(), p.begin())) << "seed " << seed;
  }
}

TEST(Dpp, OrthogonalEqualUtilitiesKeepIndexOrder) {
  const auto inst = rows_instance({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  const double u[] = {0.5, 0.5, 0.5};
  EXPECT_EQ(dpp_greedy(inst, u), (Permutation{0, 1, 2}));
}

TEST(Dpp, DuplicateDeferredBehindAllOthers) {
  const auto inst = rows_instance({{1, 0.2, 0}, {0.1, 1, 0}, {1, 0.2, 0}, {0, 0.3, 1}});
  const double u[] = {0.9, 0.6, 0.95, 0.5};
  const auto p = dpp_greedy(inst, u);
  EXPECT_EQ(p.front(), 2u);
  EXPECT_EQ(p.back(), 0u);
}

TEST(Dpp, PrefixMatchesBruteForceOverOrderedTriples) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    const std::size_t n = 3 + rng.below(4);
    const auto inst = check::random_instance(n, 4, 0, seed);
    std::vector<double> u(n);
    for (auto& v : u) v = rng.uniform(0.1, 1.0);
    const auto p = dpp_greedy(inst, u);
    auto log_det = [&](const std::vector<std::size_t>& items) {
      const std::size_t k = items.size();
      std::vector<double> m(k * k);
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
          m[i * k + j] = u[items[i]] * u[items[j]] *
                         (i == j ? 1.0 : cosine(inst.item_row(items[i]), inst.item_row(items[j])));
      const double d = linalg::lu_determinant(m, k);
      return d > 0 ? std::log(d) : -INFINITY;
    };
    // Among all ordered triples, keep the one that wins greedy's step
    // criterion at every step (lexicographic maximum of the step values,
    // index tie-break by enumeration order).
    std::vector<std::size_t> best;
    std::vector<double> best_key;
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t c = 0; c < n; ++c) {
          if (a == b || b == c || a == c) continue;
          const std::vector<double> key{log_det({a}), log_det({a, b}), log_det({a, b, c})};
          if (best.empty() || key > best_key) {
            best = {a, b, c};
            best_key = key;
          }
        }
    EXPECT_TRUE(std::equal(best.begin(), best.end(), p.begin())) << "seed " << seed;
  }
}

TEST(Dpp, NonPositiveUtilitiesPassThroughSigmoid) {
  const auto inst = check::random_instance(4, 3, 0, 2);
  const double raw[] = {-1.0, 2.0, 0.0, 0.5};
  double squashed[4];
  for (int i = 0; i < 4; ++i) squashed[i] = 1.0 / (1.0 + std::exp(-raw[i]));
  EXPECT_EQ(dpp_greedy(inst, raw), dpp_greedy(inst, squashed));
}

TEST(Diversity, BothHeuristicsSeparateDuplicatesMoreThanPointwise) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto inst = check::random_instance(6, 4, 0, seed);
    Rng rng(seed);
    std::vector<double> u(6);
    for (auto& v : u) v = rng.uniform(0.2, 0.8);
    // Item 5 duplicates item 0 and sits right behind it in utility.
    for (std::size_t j = 0; j < 4; ++j) inst.item_features[5 * 4 + j] = inst.item_features[j];
    u[0] = 0.95;
    u[5] = 0.94;
    const auto base = rank_by_scores(u);
    const auto gap = [](const Permutation& p) {
      return std::abs(static_cast<long>(position_of(p, 0)) - static_cast<long>(position_of(p, 5)));
    };
    EXPECT_GT(gap(submodular_greedy(inst, u, 2.0)), gap(base)) << seed;
    EXPECT_GT(gap(dpp_greedy(inst, u)), gap(base)) << seed;
  }
}

TEST(Prm, IdenticalItemsKeepIndexOrder) {
  auto inst = rows_instance({{0.3, 0.2}, {0.3, 0.2}, {0.3, 0.2}});
  auto cfg = check::small_model(2, 0);
  const auto params = DivNetParams::initialize(cfg, 4);
  const auto p = prm_rank(inst, params);
  EXPECT_TRUE(is_permutation(p, 3));
  EXPECT_EQ(p, prm_rank(inst, params));
}

TEST(Prm, MatchesFirstGreedyPickWithoutDiversity) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto inst = check::random_instance(6, 3, 1, seed);
    const auto params = DivNetParams::initialize(check::small_model(3, 1), seed);
    DecodeOptions options;
    options.alpha = 0.0;
    const auto d = decode_slate(inst, params, options);
    EXPECT_EQ(prm_rank(inst, params).front(), d.permutation.front());
    const Tensor y = prm_logits(inst, params);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(y[i], d.steps[0].logits[i]);
  }
}

TEST(Baselines, AlwaysEmitValidPermutations) {
  const auto scorer = PointwiseScorer::initialize(3, 0, 8, 1);
  const auto params = DivNetParams::initialize(check::small_model(3, 0), 1);
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const std::size_t n = 1 + seed % 9;
    const auto inst = check::random_instance(n, 3, 0, seed);
    const auto u = scorer.utilities(inst);
    EXPECT_TRUE(is_permutation(pointwise_rank(inst, scorer), n));
    EXPECT_TRUE(is_permutation(submodular_greedy(inst, u, 0.7), n));
    EXPECT_TRUE(is_permutation(dpp_greedy(inst, u), n));
    EXPECT_TRUE(is_permutation(prm_rank(inst, params), n));
    EXPECT_EQ(dpp_greedy(inst, u), dpp_greedy(inst, u));
  }
}

TEST(Prm, TrainingImprovesValidation) {
  SyntheticConfig cfg;
  cfg.num_items = 8;
  cfg.seed = 9;
  const auto data = generate_synthetic(cfg, 240).instances;
  const std::vector<RankingInstance> train_set(data.begin(), data.begin() + 200);
  const std::vector<RankingInstance> val(data.begin() + 200, data.end());
  PrmConfig pc;
  pc.epochs = 5;
  pc.batch_size = 16;
  const auto model = check::small_model(cfg.feature_width(), 0, 8);
  const auto trained = train_prm(train_set, val, model, pc);
  const auto init = DivNetParams::initialize(model, pc.seed);
  auto mean_ndcg = [&](const DivNetParams& p) {
    double s = 0;
    for (const auto& inst : val) {
      const auto order = prm_rank(inst, p);
      std::vector<int> labels;
      for (auto i : order) labels.push_back(inst.clicks[i]);
      double dcg = 0, idcg = 0;
      auto sorted = labels;
      std::sort(sorted.rbegin(), sorted.rend());
      for (std::size_t i = 0; i < labels.size(); ++i) {
        dcg += labels[i] / std::log2(i + 2.0);
        idcg += sorted[i] / std::log2(i + 2.0);
      }
      s += idcg > 0 ? dcg / idcg : 0;
    }
    return s / val.size();
  };
  EXPECT_GT(mean_ndcg(trained), mean_ndcg(init));
}
