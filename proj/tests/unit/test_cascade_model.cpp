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

#include <random>

#include "cs3/cascade_model.hpp"
#include "test_util.hpp"

namespace cs3 {
namespace {

using testing::max_rel;
using testing::numeric_grad;

CascadeConfig small_cascade() {
  CascadeConfig c;
  c.user_features.categorical = {{"id", 3}};
  c.user_features.dense_count = 1;
  c.item_features.categorical = {{"id", 2}};
  c.hidden_dims = {7, 6, 5, 4};
  c.embedding_init_scale = 0.5;
  return c;
}

TEST(Cascade, DefaultWidthsAndRepresentation) {
  CascadeConfig c = small_cascade();
  c.hidden_dims = CascadeConfig{}.hidden_dims;
  EXPECT_EQ(c.hidden_dims, (std::vector<std::size_t>{256, 128, 64, 32}));
  const CascadeNet net = build_cascade(c, 1);
  ASSERT_EQ(net.layers.size(), 5u);
  EXPECT_EQ(net.layers.back().out_dim(), 1u);
  const Features u{{4}, {0.5}}, v{{9}, {}};
  const CascadeForward f = cascade_forward(net, u, v);
  EXPECT_EQ(f.h_uv.size(), 32u);
  EXPECT_DOUBLE_EQ(f.prediction, sigmoid(f.logit));
}

TEST(Cascade, RequiresFourHiddenLayers) {
  CascadeConfig c = small_cascade();
  c.hidden_dims = {8, 4};
  EXPECT_THROW(build_cascade(c, 1), ShapeError);
}

TEST(Cascade, RepresentationIsLastHiddenActivation) {
  const CascadeNet net = build_cascade(small_cascade(), 2);
  const Features u{{1}, {2.0}}, v{{3}, {}};
  const CascadeForward f = cascade_forward(net, u, v);
  EXPECT_EQ(f.h_uv, f.cache.layers[3].output);
  EXPECT_EQ(f.h_uv, f.cache.layers[4].input);
}

TEST(Cascade, TrainStepReturnsPreUpdateRepresentation) {
  CascadeConfig c = small_cascade();
  c.activation = Activation::Sigmoid;
  CascadeNet net = build_cascade(c, 3);
  const Features u{{1}, {2.0}}, v{{3}, {}};
  const Vec before = cascade_forward(net, u, v).h_uv;
  for (int step = 0; step < 5; ++step) {
    const Vec expected = cascade_forward(net, u, v).h_uv;
    const CascadeStep s = cascade_train_step(net, u, v, step % 2, OptimizerConfig{});
    EXPECT_EQ(s.h_uv, expected);
  }
  EXPECT_NE(cascade_forward(net, u, v).h_uv, before);
  EXPECT_EQ(net.steps, 5u);
}

TEST(Cascade, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    CascadeConfig c = small_cascade();
    c.activation = trial % 2 ? Activation::Sigmoid : Activation::ReLU;
    CascadeNet net = build_cascade(c, 10 + trial);
    for (auto& l : net.layers) testing::randomize(l, rng, 0.8);
    const Features u{{static_cast<std::uint64_t>(trial)}, {0.3}}, v{{7}, {}};
    net.user_embedder.tables()[0].mutable_embedding(u.categorical[0]);
    net.item_embedder.tables()[0].mutable_embedding(7);
    const int y = trial % 2;
    auto loss = [&] { return bce_loss(cascade_forward(net, u, v).logit, y).loss; };
    const CascadeForward f = cascade_forward(net, u, v);
    const CascadeGradients g = cascade_backward(net, f.cache, bce_loss(f.logit, y).grad);
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
      EXPECT_LT(max_rel(g.layers[i].grad_weights.data, numeric_grad(net.layers[i].weights.data, loss)),
                1e-4);
      EXPECT_LT(max_rel(g.layers[i].grad_bias, numeric_grad(net.layers[i].bias, loss)), 1e-4);
    }
    EXPECT_LT(max_rel(g.user_rows[0].grad,
                      numeric_grad(net.user_embedder.tables()[0].mutable_embedding(u.categorical[0]), loss)),
              1e-4);
    EXPECT_LT(max_rel(g.item_rows[0].grad,
                      numeric_grad(net.item_embedder.tables()[0].mutable_embedding(7), loss)),
              1e-4);
  }
}

TEST(Cascade, SeparateEmbeddingsFromTowers) {
  const CascadeNet net = build_cascade(small_cascade(), 1);
  EXPECT_EQ(net.user_embedder.tables()[0].field(), "cascade.user.id");
  EXPECT_EQ(net.item_embedder.tables()[0].field(), "cascade.item.id");
}

}  // namespace
}  // namespace cs3
