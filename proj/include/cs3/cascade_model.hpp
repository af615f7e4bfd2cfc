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

#pragma once

// Downstream cascade ranker: a feedforward net over the concatenated user and
// item features. Its last hidden activation is the pair representation h_uv
// that the cascade caches absorb.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cs3/features.hpp"
#include "cs3/nn_core.hpp"
#include "cs3/tower_model.hpp"

namespace cs3 {

inline constexpr std::size_t kCascadeHiddenLayers = 4;

struct CascadeConfig {
  FeatureSpec user_features;
  FeatureSpec item_features;
  std::vector<std::size_t> hidden_dims{256, 128, 64, 32};
  Activation activation = Activation::ReLU;
  std::uint64_t hash_modulus = kDefaultHashModulus;
  double embedding_init_scale = 0.05;

  std::size_t input_dim() const { return user_features.width() + item_features.width(); }
  std::size_t representation_dim() const { return hidden_dims.back(); }

  void validate() const {
    if (hidden_dims.size() != kCascadeHiddenLayers)
      throw ShapeError("cascade: expected 4 hidden layers, got " +
                       std::to_string(hidden_dims.size()));
    for (std::size_t h : hidden_dims)
      if (h == 0) throw ShapeError("cascade: hidden dims must be positive");
    if (input_dim() == 0) throw ShapeError("cascade: empty input");
  }
  bool operator==(const CascadeConfig&) const = default;
};

struct CascadeNet {
  CascadeConfig config;
  FeatureEmbedder user_embedder;
  FeatureEmbedder item_embedder;
  std::vector<DenseParams> layers;  // 4 hidden + 1 scalar readout
  std::vector<OptimizerState> opt;
  std::uint64_t steps = 0;

  bool operator==(const CascadeNet&) const = default;
};

inline CascadeNet build_cascade(const CascadeConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  CascadeNet net;
  net.config = cfg;
  net.user_embedder = FeatureEmbedder(cfg.user_features, "cascade.user.", cfg.hash_modulus,
                                      seed, cfg.embedding_init_scale);
  net.item_embedder = FeatureEmbedder(cfg.item_features, "cascade.item.", cfg.hash_modulus,
                                      seed, cfg.embedding_init_scale);
  std::mt19937_64 rng(seed ^ fnv1a64("cascade"));
  std::size_t in = cfg.input_dim();
  for (std::size_t h : cfg.hidden_dims) {
    net.layers.emplace_back(h, in);
    uniform_init(net.layers.back(), rng);
    in = h;
  }
  net.layers.emplace_back(1, in);
  uniform_init(net.layers.back(), rng);
  net.opt.resize(net.layers.size());
  return net;
}

struct CascadeCache {
  Features user;
  Features item;
  std::vector<DenseCache> layers;
};

struct CascadeForward {
  double logit = 0.0;
  double prediction = 0.5;
  Vec h_uv;
  CascadeCache cache;
};

inline CascadeForward cascade_forward(const CascadeNet& net, const Features& xu,
                                      const Features& xv) {
  const CascadeConfig& cfg = net.config;
  Vec input(cfg.input_dim(), 0.0);
  net.user_embedder.gather(xu, input, 0);
  net.item_embedder.gather(xv, input, cfg.user_features.width());
  CascadeForward f;
  f.cache.user = xu;
  f.cache.item = xv;
  f.cache.layers.reserve(net.layers.size());
  Vec h = std::move(input);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const bool readout = i + 1 == net.layers.size();
    DenseResult r = dense_forward(net.layers[i], h,
                                  readout ? Activation::Identity : cfg.activation);
    if (readout) f.h_uv = h;
    h = std::move(r.output);
    f.cache.layers.push_back(std::move(r.cache));
  }
  f.logit = h[0];
  f.prediction = sigmoid(f.logit);
  return f;
}

struct CascadeGradients {
  std::vector<DenseGrads> layers;
  std::vector<SparseRowGrad> user_rows;
  std::vector<SparseRowGrad> item_rows;

  bool finite() const {
    for (const auto& l : layers)
      if (!l.finite()) return false;
    for (const auto& r : user_rows)
      if (!all_finite(r.grad)) return false;
    for (const auto& r : item_rows)
      if (!all_finite(r.grad)) return false;
    return true;
  }
};

inline CascadeGradients cascade_backward(const CascadeNet& net, const CascadeCache& cache,
                                         double dloss_dlogit) {
  if (cache.layers.size() != net.layers.size())
    throw ShapeError("cascade_backward: cache does not match net");
  CascadeGradients g;
  g.layers.reserve(net.layers.size());
  for (const auto& p : net.layers) g.layers.emplace_back(p);
  Vec grad{dloss_dlogit};
  for (std::size_t i = net.layers.size(); i-- > 0;) {
    Vec gx(net.layers[i].in_dim(), 0.0);
    dense_backward_into(net.layers[i], cache.layers[i], grad, g.layers[i], gx);
    grad = std::move(gx);
  }
  net.user_embedder.scatter(cache.user, grad, 0, g.user_rows);
  net.item_embedder.scatter(cache.item, grad, net.config.user_features.width(), g.item_rows);
  return g;
}

inline void apply_cascade_gradients(CascadeNet& net, const CascadeGradients& g,
                                    const OptimizerConfig& opt) {
  if (!g.finite()) throw NumericError("cascade update refused: non-finite gradient");
  for (std::size_t i = 0; i < net.layers.size(); ++i)
    optimizer_step(opt, net.opt[i], net.layers[i], g.layers[i]);
  net.user_embedder.apply(g.user_rows, opt);
  net.item_embedder.apply(g.item_rows, opt);
  ++net.steps;
}

struct CascadeStep {
  double loss = 0.0;
  double prediction = 0.5;
  Vec h_uv;  // computed from the parameters before this step's update
};

inline CascadeStep cascade_train_step(CascadeNet& net, const Features& xu, const Features& xv,
                                      int label, const OptimizerConfig& opt) {
  CascadeForward f = cascade_forward(net, xu, xv);
  const BceResult bce = bce_loss(f.logit, label);
  if (!std::isfinite(bce.loss)) throw NumericError("cascade_train_step: non-finite loss");
  apply_cascade_gradients(net, cascade_backward(net, f.cache, bce.grad), opt);
  return CascadeStep{bce.loss, f.prediction, std::move(f.h_uv)};
}

}  // namespace cs3
