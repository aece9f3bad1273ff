#include <gtest/gtest.h>

#include "divnet/checkpoint.hpp"
#include "divnet/errors.hpp"
#include "fixtures.hpp"

using namespace divnet;

TEST(Checkpoint, RoundTripIsBitIdentical) {
  auto cfg = check::small_model(3, 2);
  cfg.num_blocks = 2;
  const auto params = DivNetParams::initialize(cfg, 77);
  const std::string text = serialize_checkpoint(make_checkpoint(params));
  const auto back = params_from_checkpoint(parse_checkpoint(text));
  const auto a = params.named_parameters(), b = back.named_parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].first, b[i].first);
    ASSERT_EQ(a[i].second.shape(), b[i].second.shape());
    for (std::size_t j = 0; j < a[i].second.numel(); ++j) EXPECT_EQ(a[i].second[j], b[i].second[j]);
  }
  EXPECT_EQ(serialize_checkpoint(make_checkpoint(back)), text);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  const auto params = DivNetParams::initialize(check::small_model(4, 0), 3);
  const std::string first = serialize_checkpoint(make_checkpoint(params, ModelKind::Prm));
  EXPECT_EQ(serialize_checkpoint(parse_checkpoint(first)), first);
}

TEST(Checkpoint, GreedyDecodeSurvivesRoundTrip) {
  const auto params = DivNetParams::initialize(check::small_model(3, 1), 5);
  const auto back = params_from_checkpoint(parse_checkpoint(serialize_checkpoint(make_checkpoint(params))));
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto inst = check::random_instance(9, 3, 1, seed);
    const auto a = decode_slate(inst, params, {});
    const auto b = decode_slate(inst, back, {});
    EXPECT_EQ(a.permutation, b.permutation);
    EXPECT_EQ(a.step_probabilities, b.step_probabilities);
  }
}

TEST(Checkpoint, UnknownVersionIsVersionError) {
  const auto params = DivNetParams::initialize(check::small_model(3, 0), 5);
  auto doc = nlohmann::json::parse(serialize_checkpoint(make_checkpoint(params)));
  doc["version"] = 999;
  EXPECT_THROW(parse_checkpoint(doc.dump()), VersionError);
}

TEST(Checkpoint, TruncatedOrCorruptIsIntegrityError) {
  const auto params = DivNetParams::initialize(check::small_model(3, 0), 5);
  const std::string text = serialize_checkpoint(make_checkpoint(params));
  EXPECT_THROW(parse_checkpoint(text.substr(0, text.size() / 2)), IntegrityError);
  std::string flipped = text;
  const auto pos = flipped.find("\"data\":[") + 9;
  flipped[pos] = flipped[pos] == '1' ? '2' : '1';
  EXPECT_THROW(parse_checkpoint(flipped), IntegrityError);
  EXPECT_THROW(parse_checkpoint(""), IntegrityError);
  EXPECT_THROW(parse_checkpoint("[]"), IntegrityError);
}

TEST(Checkpoint, PointwiseScorerRoundTrip) {
  const auto scorer = PointwiseScorer::initialize(3, 1, 5, 2);
  const auto back = scorer_from_checkpoint(parse_checkpoint(serialize_checkpoint(make_checkpoint(scorer))));
  const auto inst = check::random_instance(4, 3, 1, 2);
  EXPECT_EQ(scorer.utilities(inst), back.utilities(inst));
  EXPECT_THROW(params_from_checkpoint(make_checkpoint(scorer)), ConfigError);
  EXPECT_THROW(scorer_from_checkpoint(make_checkpoint(DivNetParams::initialize(check::small_model(3, 1), 1))),
               ConfigError);
}

TEST(Checkpoint, ModelKindNames) {
  for (auto kind : {ModelKind::DivNet, ModelKind::Prm, ModelKind::Pointwise})
    EXPECT_EQ(parse_model_kind(to_string(kind)), kind);
  EXPECT_THROW(parse_model_kind("lambdamart"), ConfigError);
}

TEST(Checkpoint, HashIsStable) {
  EXPECT_EQ(hex64(fnv1a64("")), "cbf29ce484222325");
  EXPECT_EQ(hex64(fnv1a64("a")), "af63dc4c8601ec8c");
}
