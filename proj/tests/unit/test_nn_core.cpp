/*
 * Copyright 2026 The CS3 Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "cs3/nn_core.hpp"
#include "test_util.hpp"

namespace cs3 {
namespace {

using testing::max_rel;
using testing::numeric_grad;
using testing::random_vec;

TEST(DenseForward, IdentityWeightsZeroBiasReturnsInput) {
  DenseParams p(3, 3);
  p.weights = Matrix::identity(3);
  const Vec x{0.5, -2.0, 7.25};
  const DenseResult r = dense_forward(p, x, Activation::Identity);
  EXPECT_EQ(r.output, x);
}

TEST(DenseForward, HandComputedAffineAndActivations) {
  DenseParams p(2, 3);
  p.weights.data = {1, 2, 3, -1, 0, 1};
  p.bias = {0.5, -0.25};
  const Vec x{1, -1, 2};
  // pre = [1 - 2 + 6 + 0.5, -1 + 0 + 2 - 0.25] = [5.5, 0.75]
  EXPECT_EQ(dense_forward(p, x, Activation::Identity).output, (Vec{5.5, 0.75}));
  p.bias = {-10, 0.75};
  const DenseResult r = dense_forward(p, x, Activation::ReLU);
  EXPECT_EQ(r.output, (Vec{0.0, 1.75}));
  const Vec s = dense_forward(p, x, Activation::Sigmoid).output;
  EXPECT_NEAR(s[0], 1.0 / (1.0 + std::exp(5.0)), 1e-15);
  EXPECT_NEAR(s[1], 1.0 / (1.0 + std::exp(-1.75)), 1e-15);
}

TEST(DenseForward, TwoByTwoReluExample) {
  DenseParams p(2, 2);
  p.weights.data = {1, 2, 0, 1};
  p.bias = {1, 0};
  EXPECT_EQ(dense_forward(p, Vec{1, 1}, Activation::ReLU).output, (Vec{4, 1}));
}

TEST(DenseBackward, RandomSigmoidLayerMatchesFiniteDifferences) {
  std::mt19937_64 rng(99);
  DenseParams p(3, 4);
  testing::randomize(p, rng);
  const Vec x = random_vec(rng, 4);
  const Vec w = random_vec(rng, 3);
  auto loss = [&] {
    const Vec y = dense_forward(p, x, Activation::Sigmoid).output;
    return dot(y, w);
  };
  const GradBundle g = dense_backward(p, dense_forward(p, x, Activation::Sigmoid).cache, w);
  EXPECT_LT(max_rel(g.grad_weights.data, numeric_grad(p.weights.data, loss)), 1e-5);
  EXPECT_LT(max_rel(g.grad_bias, numeric_grad(p.bias, loss)), 1e-5);
}

TEST(DenseForward, WrongInputLengthIsShapeError) {
  DenseParams p(2, 3);
  const Vec x{1, 2};
  EXPECT_THROW(dense_forward(p, x, Activation::ReLU), ShapeError);
}

TEST(DenseBackward, MismatchedCacheIsShapeError) {
  DenseParams p(2, 3), q(2, 4);
  const Vec x{1, 2, 3}, g{1, 1};
  const DenseResult r = dense_forward(p, x, Activation::ReLU);
  EXPECT_THROW(dense_backward(q, r.cache, g), ShapeError);
  const Vec bad{1, 1, 1};
  EXPECT_THROW(dense_backward(p, r.cache, bad), ShapeError);
}

TEST(DenseBackward, ReluSubgradientAtZeroIsZero) {
  EXPECT_EQ(activation_grad(Activation::ReLU, 0.0, 0.0), 0.0);
  EXPECT_EQ(activation_grad(Activation::ReLU, 1e-300, 1e-300), 1.0);
  EXPECT_EQ(activation_grad(Activation::ReLU, -1e-300, 0.0), 0.0);
}

class DenseGradOracle : public ::testing::TestWithParam<Activation> {};

TEST_P(DenseGradOracle, AnalyticMatchesCentralDifferences) {
  std::mt19937_64 rng(42 + static_cast<int>(GetParam()));
  std::uniform_int_distribution<std::size_t> dim(1, 9);
  for (int trial = 0; trial < 100; ++trial) {
    DenseParams p(dim(rng), dim(rng));
    testing::randomize(p, rng);
    Vec x = random_vec(rng, p.in_dim());
    const Vec w = random_vec(rng, p.out_dim());
    auto loss = [&] { return dot(dense_forward(p, x, GetParam()).output, w); };
    const GradBundle g = dense_backward(p, dense_forward(p, x, GetParam()).cache, w);
    EXPECT_LT(max_rel(g.grad_weights.data, numeric_grad(p.weights.data, loss)), 1e-4);
    EXPECT_LT(max_rel(g.grad_bias, numeric_grad(p.bias, loss)), 1e-4);
    EXPECT_LT(max_rel(g.grad_input, numeric_grad(x, loss)), 1e-4);
  }
}

INSTANTIATE_TEST_SUITE_P(Activations, DenseGradOracle,
                         ::testing::Values(Activation::Identity, Activation::ReLU,
                                           Activation::Sigmoid));

TEST(FiniteDiff, QuadraticHasExactSlope) {
  auto f = [](std::span<const double> x) { return 3 * x[0] * x[0] + x[1]; };
  const Vec at{2.0, -1.0};
  const Vec g = finite_diff_grad(f, at, 1e-5);
  EXPECT_NEAR(g[0], 12.0, 1e-8);
  EXPECT_NEAR(g[1], 1.0, 1e-8);
}

TEST(FiniteDiff, NonFiniteEvaluationNamesCoordinate) {
  auto f = [](std::span<const double> x) { return x[1] > 0.5 ? std::log(-1.0) : x[0]; };
  const Vec at{0.0, 0.5};
  try {
    finite_diff_grad(f, at, 1e-3);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("coordinate 1"), std::string::npos);
  }
  EXPECT_THROW(finite_diff_grad(f, at, 0.0), std::invalid_argument);
}

TEST(RelativeError, FloorAbsorbsRoundoffNearZero) {
  EXPECT_DOUBLE_EQ(relative_error(1e-12, 0.0), 1e-8);
  EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0), 0.5);
}

TEST(Sigmoid, StableAtExtremes) {
  EXPECT_EQ(sigmoid(-800.0), 0.0);
  EXPECT_EQ(sigmoid(800.0), 1.0);
  EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5);
}

TEST(AllFinite, DetectsNanAndInfinity) {
  EXPECT_TRUE(all_finite(Vec{0.0, -1e308, 5e-324}));
  EXPECT_FALSE(all_finite(Vec{0.0, std::numeric_limits<double>::infinity()}));
  EXPECT_FALSE(all_finite(Vec{-std::numeric_limits<double>::infinity()}));
  EXPECT_FALSE(all_finite(Vec{1.0, std::nan("")}));
}

// Textbook bias-corrected Adam, written out independently.
TEST(Optimizer, AdamMatchesUnrolledReference) {
  OptimizerConfig cfg;
  cfg.learning_rate = 0.01;
  MomentState st;
  Vec p{1.0, -0.5, 0.0};
  Vec ref = p, m(3, 0.0), v(3, 0.0);
  std::mt19937_64 rng(3);
  for (int t = 1; t <= 50; ++t) {
    const Vec g = random_vec(rng, 3);
    apply_update(cfg, st, p, g);
    for (int i = 0; i < 3; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(0.9, t));
      const double vh = v[i] / (1 - std::pow(0.999, t));
      ref[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  EXPECT_EQ(st.step, 50u);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(p[i], ref[i], 1e-12);
}

TEST(Optimizer, FirstAdamStepMovesEachCoordinateByLearningRate) {
  OptimizerConfig cfg;
  MomentState st;
  Vec p{0.0, 0.0};
  const Vec g{3.0, -0.001};
  apply_update(cfg, st, p, g);
  EXPECT_NEAR(p[0], -1e-3, 1e-9);
  EXPECT_NEAR(p[1], 1e-3, 1e-8);
}

TEST(Optimizer, SgdStep) {
  OptimizerConfig cfg{OptimizerKind::SGD, 0.5};
  MomentState st;
  Vec p{1.0, 2.0};
  apply_update(cfg, st, p, Vec{2.0, -2.0});
  EXPECT_EQ(p, (Vec{0.0, 3.0}));
  EXPECT_TRUE(st.m.empty());
}

TEST(Optimizer, SgdScalarExample) {
  OptimizerConfig cfg{OptimizerKind::SGD, 0.1};
  MomentState st;
  Vec p{1.0};
  apply_update(cfg, st, p, Vec{2.0});
  EXPECT_DOUBLE_EQ(p[0], 0.8);
}

TEST(Optimizer, AdamWithZeroGradientsLeavesParamsUnchanged) {
  OptimizerConfig cfg;
  OptimizerState st;
  DenseParams p(2, 3);
  std::mt19937_64 rng(5);
  testing::randomize(p, rng);
  const DenseParams before = p;
  DenseGrads g(p);
  for (int i = 0; i < 5; ++i) optimizer_step(cfg, st, p, g);
  EXPECT_EQ(p, before);
  EXPECT_EQ(st.step(), 5u);
}

TEST(Optimizer, RefusesNonFiniteGradsWithoutTouchingParams) {
  OptimizerConfig cfg;
  OptimizerState st;
  DenseParams p(2, 2);
  p.weights.data = {1, 2, 3, 4};
  const DenseParams before = p;
  DenseGrads g(p);
  g.grad_weights.data[2] = std::nan("");
  EXPECT_THROW(optimizer_step(cfg, st, p, g), NumericError);
  EXPECT_EQ(p, before);
  EXPECT_EQ(st.step(), 0u);
}

TEST(Optimizer, ShapeMismatchRefused) {
  OptimizerConfig cfg;
  OptimizerState st;
  DenseParams p(2, 2), q(2, 3);
  EXPECT_THROW(optimizer_step(cfg, st, p, DenseGrads(q)), ShapeError);
}

TEST(Optimizer, ValidateRejectsBadHyperparameters) {
  OptimizerConfig c;
  c.learning_rate = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.beta1 = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.sparse_learning_rate = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(UniformInit, WithinGlorotLimitAndDeterministic) {
  DenseParams a(16, 48), b(16, 48);
  std::mt19937_64 r1(9), r2(9);
  uniform_init(a, r1);
  uniform_init(b, r2);
  EXPECT_EQ(a, b);
  const double limit = std::sqrt(6.0 / 64.0);
  for (double w : a.weights.data) EXPECT_LE(std::abs(w), limit);
  for (double x : a.bias) EXPECT_EQ(x, 0.0);
}

TEST(ParseActivation, RoundTripAndUnknown) {
  for (auto a : {Activation::Identity, Activation::ReLU, Activation::Sigmoid})
    EXPECT_EQ(parse_activation(to_string(a)), a);
  EXPECT_THROW(parse_activation("tanh"), std::invalid_argument);
}

}  // namespace
}  // namespace cs3
