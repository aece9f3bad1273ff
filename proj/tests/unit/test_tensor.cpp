#include <gtest/gtest.h>

#include <cmath>

#include "divnet/errors.hpp"
#include "divnet/linalg.hpp"
#include "divnet/optim.hpp"
#include "divnet/tensor.hpp"
#include "gradcheck.hpp"
#include "op_cases.hpp"

using namespace divnet;

namespace {

void expect_values(const Tensor& t, std::vector<double> expected, double tol = 1e-12) {
  ASSERT_EQ(t.numel(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(t[i], expected[i], tol) << "entry " << i;
}

}  // namespace

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const Tensor m = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  const Tensor out = matmul(Tensor::identity(2), m);
  EXPECT_EQ(out.shape(), m.shape());
  expect_values(out, {1, 2, 3, 4, 5, 6}, 0.0);
}

TEST(Matmul, HandComputedProduct) {
  expect_values(matmul(Tensor::matrix({{1, 2}, {3, 4}}), Tensor::matrix({{1}, {1}})), {3, 7}, 0.0);
}

TEST(Matmul, MismatchNamesBothShapes) {
  try {
    matmul(Tensor::zeros(Shape::matrix(2, 3)), Tensor::zeros(Shape::matrix(2, 3)));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3] x [2x3]"), std::string::npos) << msg;
  }
}

TEST(Softmax, UniformRow) {
  expect_values(softmax_rows(Tensor::matrix({{1, 1, 1}})), {1.0 / 3, 1.0 / 3, 1.0 / 3}, 1e-15);
}

TEST(Softmax, LnTwoRow) {
  expect_values(softmax_rows(Tensor::matrix({{0.0, std::log(2.0)}})), {1.0 / 3, 2.0 / 3}, 1e-15);
}

TEST(Softmax, MaskedEntriesGetExactZero) {
  const std::uint8_t mask[] = {1, 0, 1};
  const Tensor y = masked_softmax_rows(Tensor::matrix({{0.3, 9.0, -0.2}}), mask);
  EXPECT_EQ(y[1], 0.0);
  EXPECT_NEAR(y[0] + y[2], 1.0, 1e-15);
}

TEST(Softmax, FullyMaskedRowIsContractViolation) {
  const std::uint8_t mask[] = {0, 0};
  EXPECT_THROW(masked_softmax_rows(Tensor::matrix({{1, 2}}), mask), ContractViolation);
}

TEST(Softmax, NonFiniteInputRejected) {
  EXPECT_THROW(softmax_rows(Tensor::matrix({{1.0, NAN}})), NonFiniteError);
}

TEST(LayerNorm, ConstantRowMapsToBias) {
  const Tensor y = layer_norm(Tensor::matrix({{5, 5, 5}}), Tensor::full(Shape::vector(3), 1.0),
                              Tensor::zeros(Shape::vector(3)));
  expect_values(y, {0, 0, 0}, 1e-12);
}

TEST(LayerNorm, PopulationVariance) {
  const Tensor y = layer_norm(Tensor::matrix({{1, 2, 3}}), Tensor::full(Shape::vector(3), 1.0),
                              Tensor::zeros(Shape::vector(3)));
  expect_values(y, {-1.2247, 0.0, 1.2247}, 1e-4);
}

TEST(Sigmoid, CenterAndExtremes) {
  EXPECT_EQ(sigmoid(Tensor::scalar(0.0)).item(), 0.5);
  const double low = sigmoid(Tensor::scalar(-1e6)).item();
  const double high = sigmoid(Tensor::scalar(1e6)).item();
  EXPECT_GT(low, 0.0);
  EXPECT_LT(high, 1.0);
  EXPECT_TRUE(std::isfinite(std::log(low)));
}

TEST(Determinant, Fixtures) {
  EXPECT_NEAR(determinant(Tensor::identity(3)).item(), 1.0, 1e-15);
  EXPECT_NEAR(determinant(Tensor::matrix({{1, 2, 3}, {1, 2, 3}, {0, 1, 4}})).item(), 0.0, 1e-12);
  EXPECT_NEAR(determinant(Tensor::matrix({{1, 0.5}, {0.5, 1}})).item(), 0.75, 1e-15);
}

TEST(Determinant, NonSquareRejected) {
  EXPECT_THROW(determinant(Tensor::zeros(Shape::matrix(2, 3))), ShapeError);
}

TEST(Determinant, MatchesCofactorExpansion) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Tensor a = check::random_tensor(Shape::matrix(3, 3), seed, -1, 1, false);
    const auto v = a.data();
    const double cofactor = v[0] * (v[4] * v[8] - v[5] * v[7]) - v[1] * (v[3] * v[8] - v[5] * v[6]) +
                            v[2] * (v[3] * v[7] - v[4] * v[6]);
    EXPECT_NEAR(determinant(a).item(), cofactor, 1e-12);
  }
}

TEST(Determinant, SingularGradientStaysFinite) {
  Tensor a = Tensor::matrix({{1, 2}, {2, 4}}, true);
  backward(determinant(a));
  for (double g : a.grad()) EXPECT_TRUE(std::isfinite(g));
}

TEST(Cosine, SelfAndOrthogonal) {
  const Tensor a = Tensor::matrix({{1, 2, -1}});
  EXPECT_NEAR(cosine_rows(a, a).item(), 1.0, 1e-15);
  EXPECT_NEAR(cosine_rows(Tensor::matrix({{1, 0}}), Tensor::matrix({{0, 3}})).item(), 0.0, 0.0);
  EXPECT_EQ(cosine_rows(Tensor::matrix({{0, 0}}), Tensor::matrix({{1, 3}})).item(), 0.0);
}

TEST(Backward, SumGivesOnes) {
  Tensor x = Tensor::matrix({{1, -2}, {3, 0.5}, {7, 8}}, true);
  backward(sum(x));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SquareGivesTwiceInput) {
  Tensor x = Tensor::matrix({{1, -2, 3.5}}, true);
  backward(sum(mul(x, x)));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(x.grad()[i], 2.0 * x[i]);
}

TEST(Backward, NonScalarLossRejected) {
  Tensor x = Tensor::matrix({{1, 2}}, true);
  EXPECT_THROW(backward(scale(x, 2.0)), ShapeError);
}

TEST(Backward, LeafGradientsAccumulateAcrossCalls) {
  Tensor x = Tensor::matrix({{1, 2}}, true);
  const Tensor loss = sum(scale(x, 3.0));
  backward(loss);
  backward(loss);
  EXPECT_EQ(x.grad()[0], 6.0);
}

TEST(ComputationGraph, EachNodeReplayedOnceInReverseOrder) {
  Tensor x = Tensor::matrix({{0.5, -1.0}}, true);
  const Tensor y = mul(x, x);
  const Tensor loss = sum(add(y, y));  // y is reached twice
  const ComputationGraph graph(loss);
  std::vector<std::uint64_t> seen;
  graph.backward([&](const detail::Node& n) { seen.push_back(n.sequence); });
  std::vector<std::uint64_t> sorted = seen;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  EXPECT_EQ(seen, sorted);
  EXPECT_EQ(std::adjacent_find(sorted.begin(), sorted.end()), sorted.end());
  EXPECT_EQ(x.grad()[0], 4.0 * 0.5);
}

TEST(NoGrad, GuardStopsRecording) {
  Tensor x = Tensor::matrix({{1, 2}}, true);
  Tensor y;
  {
    NoGradGuard guard;
    y = scale(x, 2.0);
  }
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(grad_enabled());
}

TEST(GradCheck, EveryPrimitiveOverTwentySeeds) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    for (auto& c : check::primitive_cases(seed)) {
      const auto r = check::check_gradients(c.loss, c.inputs);
      EXPECT_LT(r.max_error, 1e-4) << c.name << " seed " << seed << " at " << r.worst;
    }
  }
}

TEST(Determinism, RepeatedOpsAreBitIdentical) {
  const Tensor a = check::random_tensor(Shape::matrix(5, 7), 3, -1, 1, false);
  const Tensor b = check::random_tensor(Shape::matrix(7, 4), 4, -1, 1, false);
  const Tensor x = softmax_rows(matmul(a, b));
  const Tensor y = softmax_rows(matmul(a, b));
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(x[i], y[i]);
}

TEST(Linalg, LuInverseRecoversIdentity) {
  const std::vector<double> a = {4, 1, 2, 1, 3, 0, 2, 0, 5};
  const auto lu = linalg::lu_factor(a, 3);
  const auto inv = lu.inverse();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 3; ++k) s += a[i * 3 + k] * inv[k * 3 + j];
      EXPECT_NEAR(s, i == j ? 1.0 : 0.0, 1e-12);
    }
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Tensor w = Tensor::matrix({{0.3, -0.7}}, true);
  w.zero_grad();
  std::vector<Tensor> params{w};
  Adam adam;
  adam.step(params);
  EXPECT_EQ(w[0], 0.3);
  EXPECT_EQ(w[1], -0.7);
}

TEST(Adam, DescendsOnSquare) {
  Tensor w = Tensor::scalar(1.0, true);
  std::vector<Tensor> params{w};
  AdamOptions options;
  options.learning_rate = 0.01;
  Adam adam(options);
  backward(mul(w, w));
  adam.step(params);
  EXPECT_LT(std::abs(w.item()), 1.0);
  EXPECT_EQ(w.grad()[0], 0.0);
}
