#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "divnet/data.hpp"
#include "divnet/errors.hpp"
#include "divnet/rng.hpp"
#include "divnet/synthetic.hpp"

using namespace divnet;

namespace {

std::vector<RankingInstance> parse(const std::string& text, std::size_t width = 0) {
  std::istringstream in(text);
  return parse_letor(in, width);
}

}  // namespace

TEST(Letor, SingleLine) {
  const auto out = parse("0 qid:1 1:1.0 2:0.5\n", 4);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].num_items, 1u);
  EXPECT_EQ(out[0].grades[0], 0);
  EXPECT_EQ(out[0].item_features, (std::vector<double>{1.0, 0.5, 0.0, 0.0}));
}

TEST(Letor, SharedQidGroupsInFileOrder) {
  const auto out = parse("1 qid:7 1:0.1\n3 qid:7 1:0.2 # trailing\r\n\n");
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].num_items, 2u);
  EXPECT_EQ(out[0].item_features, (std::vector<double>{0.1, 0.2}));
  EXPECT_EQ(out[0].display_order, (Permutation{0, 1}));
}

TEST(Letor, GradesBinarize) {
  const auto out = parse("3 qid:a 1:1\n2 qid:a 1:1\n4 qid:a 1:1\n0 qid:a 1:1\n");
  EXPECT_EQ(out[0].clicks, (std::vector<int>{1, 0, 1, 0}));
  EXPECT_EQ(out[0].grades, (std::vector<int>{3, 2, 4, 0}));
}

TEST(Letor, MalformedLinesReportLineNumbers) {
  try {
    parse("0 qid:1 1:1\n0 qid:1 1:x\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(parse("1.5 qid:1 1:1\n"), ParseError);
  EXPECT_THROW(parse("1 1:1\n"), ParseError);
  EXPECT_THROW(parse("1 qid:1 0:1\n"), ParseError);
  EXPECT_THROW(parse("7 qid:1 1:1\n"), ParseError);
  EXPECT_THROW(parse("1 qid:1 5:1\n", 4), ParseError);
}

TEST(Letor, UserFeaturesDefaultToZeros) {
  std::istringstream in("1 qid:1 1:1\n");
  const auto out = parse_letor(in, 0, 3);
  EXPECT_EQ(out[0].user_features, (std::vector<double>{0, 0, 0}));
}

TEST(Letor, WriteThenParsePreservesEverything) {
  SyntheticConfig cfg;
  cfg.num_items = 6;
  const auto data = generate_synthetic(cfg, 5);
  std::ostringstream out;
  write_letor(out, data.instances);
  const auto back = parse(out.str(), cfg.feature_width());
  ASSERT_EQ(back.size(), data.instances.size());
  for (std::size_t q = 0; q < back.size(); ++q) {
    EXPECT_EQ(back[q].query_id, data.instances[q].query_id);
    EXPECT_EQ(back[q].grades, data.instances[q].grades);
    EXPECT_EQ(back[q].clicks, data.instances[q].clicks);
    EXPECT_EQ(back[q].item_features, data.instances[q].item_features);
  }
  std::ostringstream again;
  write_letor(again, back);
  EXPECT_EQ(out.str(), again.str());
}

TEST(Split, TenQueriesEightOneOne) {
  SyntheticConfig cfg;
  const auto data = generate_synthetic(cfg, 10);
  const auto s = split_queries(data.instances, 3);
  EXPECT_EQ(s.train.size(), 8u);
  EXPECT_EQ(s.validation.size(), 1u);
  EXPECT_EQ(s.test.size(), 1u);
}

TEST(Split, DeterministicDisjointCover) {
  SyntheticConfig cfg;
  const auto data = generate_synthetic(cfg, 57);
  const auto a = split_queries(data.instances, 11);
  const auto b = split_queries(data.instances, 11);
  std::multiset<std::string> ids;
  for (const auto* part : {&a.train, &a.validation, &a.test})
    for (const auto& inst : *part) ids.insert(inst.query_id);
  EXPECT_EQ(ids.size(), 57u);
  EXPECT_EQ(std::set<std::string>(ids.begin(), ids.end()).size(), 57u);
  ASSERT_EQ(a.train.size(), b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) EXPECT_EQ(a.train[i].query_id, b.train[i].query_id);
}

TEST(Split, TooFewQueries) {
  SyntheticConfig cfg;
  const auto data = generate_synthetic(cfg, 2);
  EXPECT_THROW(split_queries(data.instances, 1), ConfigError);
}

TEST(Synthetic, PureFunctionOfConfig) {
  SyntheticConfig cfg;
  cfg.seed = 42;
  const auto a = generate_synthetic(cfg, 20);
  const auto b = generate_synthetic(cfg, 20);
  std::ostringstream sa, sb;
  write_letor(sa, a.instances);
  write_letor(sb, b.instances);
  EXPECT_EQ(sa.str(), sb.str());
  cfg.seed = 43;
  std::ostringstream sc;
  write_letor(sc, generate_synthetic(cfg, 20).instances);
  EXPECT_NE(sa.str(), sc.str());
}

TEST(Synthetic, FeaturesCarryCategoryAndAttractiveness) {
  SyntheticConfig cfg;
  cfg.noise = 0.0;
  const auto data = generate_synthetic(cfg, 3);
  for (std::size_t q = 0; q < 3; ++q)
    for (std::size_t i = 0; i < cfg.num_items; ++i) {
      const auto row = data.instances[q].item_row(i);
      const auto& item = data.metadata[q].items[i];
      EXPECT_EQ(row[item.category], cfg.category_signal);
      EXPECT_EQ(row[cfg.num_categories], item.attractiveness);
    }
}

TEST(Synthetic, NoInteractionCtrMatchesDiscountedAttractiveness) {
  // β = 1 and a single attractiveness value: the click rate at slot t is a·d_t.
  SyntheticConfig cfg;
  cfg.beta = 1.0;
  cfg.num_items = 4;
  cfg.attractiveness_min = cfg.attractiveness_max = 0.6;
  const std::size_t queries = 50000;
  const auto data = generate_synthetic(cfg, queries);
  for (std::size_t t = 0; t < cfg.num_items; ++t) {
    double clicks = 0.0;
    for (const auto& inst : data.instances) clicks += inst.clicks[t];
    const double p = 0.6 * position_discount(t + 1);
    const double sigma = std::sqrt(p * (1 - p) / queries);
    EXPECT_LT(std::abs(clicks / queries - p), 3.0 * sigma) << "slot " << t + 1;
  }
}

TEST(Synthetic, SameCategoryRepeatHalvesClickProbability) {
  const SyntheticQuery same{"q", 0.5, {{0, 0.8}, {0, 0.8}}};
  const SyntheticQuery fresh{"q", 0.5, {{0, 0.8}, {1, 0.8}}};
  const Permutation order{0, 1};
  const double first = 0.8 * position_discount(1);
  EXPECT_NEAR(expected_clicks(same, order) - first, 0.5 * (expected_clicks(fresh, order) - first), 1e-15);
}

TEST(Oracle, NoInteractionOptimumIsDescendingAttractiveness) {
  SyntheticQuery q{"q", 1.0, {{0, 0.3}, {1, 0.9}, {0, 0.5}, {2, 0.1}, {1, 0.7}}};
  EXPECT_EQ(oracle_optimal_slate(q).permutation, (Permutation{1, 4, 2, 0, 3}));
}

TEST(Oracle, DistinctItemInterleavesForSmallBeta) {
  SyntheticQuery q{"q", 0.1, {{0, 0.9}, {0, 0.85}, {1, 0.5}}};
  const auto best = oracle_optimal_slate(q);
  EXPECT_EQ(best.permutation, (Permutation{0, 2, 1}));
  // Independent enumeration of all 3! orders.
  Permutation p{0, 1, 2};
  double top = 0.0;
  do top = std::max(top, expected_clicks(q, p));
  while (std::next_permutation(p.begin(), p.end()));
  EXPECT_EQ(best.expected_clicks, top);
}

TEST(Oracle, BeatsRandomPermutationsAndDescendingOrder) {
  SyntheticConfig cfg;
  cfg.num_items = 7;
  cfg.num_categories = 3;
  const auto data = generate_synthetic(cfg, 10);
  Rng rng(5);
  for (const auto& q : data.metadata) {
    const auto best = oracle_optimal_slate(q);
    Permutation p = identity_permutation(q.items.size());
    for (int i = 0; i < 1000; ++i) {
      for (std::size_t k = p.size(); k > 1; --k) std::swap(p[k - 1], p[rng.below(k)]);
      EXPECT_GE(best.expected_clicks, expected_clicks(q, p));
    }
    std::vector<double> a;
    for (const auto& item : q.items) a.push_back(item.attractiveness);
    Permutation desc = identity_permutation(a.size());
    std::stable_sort(desc.begin(), desc.end(), [&](auto x, auto y) { return a[x] > a[y]; });
    EXPECT_GE(best.expected_clicks, expected_clicks(q, desc));
  }
}

TEST(Oracle, CollisionAtTopMakesDescendingOrderStrictlySuboptimal) {
  SyntheticQuery q{"q", 0.5, {{0, 0.9}, {0, 0.8}, {1, 0.7}, {2, 0.2}}};
  const Permutation desc{0, 1, 2, 3};
  EXPECT_GT(oracle_optimal_slate(q).expected_clicks, expected_clicks(q, desc));
}

TEST(Oracle, RefusesLargeSlates) {
  SyntheticQuery q{"q", 0.5, std::vector<SyntheticItem>(11, {0, 0.5})};
  EXPECT_THROW(oracle_optimal_slate(q), ConfigError);
}

TEST(Synthetic, MetadataRoundTrip) {
  SyntheticConfig cfg;
  cfg.num_items = 4;
  const auto data = generate_synthetic(cfg, 3);
  std::stringstream buf;
  write_synthetic_metadata(buf, data.metadata);
  const auto back = read_synthetic_metadata(buf);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t q = 0; q < 3; ++q) {
    EXPECT_EQ(back[q].query_id, data.metadata[q].query_id);
    EXPECT_EQ(back[q].beta, data.metadata[q].beta);
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_EQ(back[q].items[i].category, data.metadata[q].items[i].category);
      EXPECT_EQ(back[q].items[i].attractiveness, data.metadata[q].items[i].attractiveness);
    }
  }
}

TEST(Synthetic, InvalidConfigRejected) {
  SyntheticConfig cfg;
  cfg.beta = 0.0;
  EXPECT_THROW(generate_synthetic(cfg, 1), ConfigError);
  cfg.beta = 1.5;
  EXPECT_THROW(generate_synthetic(cfg, 1), ConfigError);
}
