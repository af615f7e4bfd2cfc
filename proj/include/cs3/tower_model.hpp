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

// DSSM-style two-tower retriever. Each tower sees
//   concat(embedded features, cross vector c, cascade vector s)
// and the relevance score is the dot product of the two tower outputs.

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "cs3/cas_layer.hpp"
#include "cs3/features.hpp"
#include "cs3/nn_core.hpp"

namespace cs3 {

struct TowerConfig {
  FeatureSpec features;
  std::vector<std::size_t> hidden_dims{64, 32};
  // One flag per layer (hidden layers then the output layer). Empty means
  // "every layer except the input layer".
  std::vector<bool> cas_enabled;
  Activation activation = Activation::ReLU;
  std::size_t embedding_dim = 16;
  std::size_t cts_dim = 0;
  std::size_t cms_dim = 0;
  int cas_cycles = 1;
  std::uint64_t hash_modulus = kDefaultHashModulus;
  double embedding_init_scale = 0.05;

  std::size_t layer_count() const { return hidden_dims.size() + 1; }
  std::size_t input_dim() const { return features.width() + cts_dim + cms_dim; }

  std::vector<bool> resolved_cas() const {
    if (!cas_enabled.empty()) return cas_enabled;
    std::vector<bool> flags(layer_count(), true);
    flags[0] = false;
    return flags;
  }

  void validate() const {
    if (embedding_dim == 0) throw ShapeError("tower: embedding_dim must be > 0");
    for (std::size_t h : hidden_dims)
      if (h == 0) throw ShapeError("tower: hidden dims must be positive");
    if (!cas_enabled.empty() && cas_enabled.size() != layer_count())
      throw ShapeError("tower: cas_enabled has " + std::to_string(cas_enabled.size()) +
                       " flags for " + std::to_string(layer_count()) + " layers");
    if (cas_cycles < 1) throw std::invalid_argument("tower: cas_cycles must be >= 1");
    if (input_dim() == 0) throw ShapeError("tower: empty input");
    for (const auto& f : features.categorical)
      if (f.dim == 0) throw ShapeError("tower: field '" + f.name + "' has zero dim");
  }
  bool operator==(const TowerConfig&) const = default;
};

struct DenseLayer {
  DenseParams params;
  Activation act = Activation::ReLU;
  bool operator==(const DenseLayer&) const = default;
};

using Layer = std::variant<DenseLayer, CasParams>;

struct LayerOptState {
  OptimizerState theta;
  OptimizerState phi;
  bool operator==(const LayerOptState&) const = default;
};

inline std::size_t layer_in_dim(const Layer& l) {
  return std::visit([](const auto& x) -> std::size_t {
    if constexpr (std::is_same_v<std::decay_t<decltype(x)>, DenseLayer>)
      return x.params.in_dim();
    else
      return x.in_dim();
  }, l);
}

inline std::size_t layer_out_dim(const Layer& l) {
  return std::visit([](const auto& x) -> std::size_t {
    if constexpr (std::is_same_v<std::decay_t<decltype(x)>, DenseLayer>)
      return x.params.out_dim();
    else
      return x.out_dim();
  }, l);
}

struct Tower {
  TowerConfig config;
  FeatureEmbedder embedder;
  std::vector<Layer> layers;
  std::vector<LayerOptState> opt;

  bool operator==(const Tower&) const = default;
};

// Hidden layers use the configured activation; the output layer is linear.
inline Tower build_tower(const TowerConfig& cfg, const std::string& name,
                         std::uint64_t seed) {
  cfg.validate();
  Tower t;
  t.config = cfg;
  t.embedder = FeatureEmbedder(cfg.features, name + ".", cfg.hash_modulus, seed,
                               cfg.embedding_init_scale);
  std::mt19937_64 rng(seed ^ fnv1a64(name));
  const std::vector<bool> cas = cfg.resolved_cas();
  std::size_t in = cfg.input_dim();
  for (std::size_t i = 0; i < cfg.layer_count(); ++i) {
    const bool last = i + 1 == cfg.layer_count();
    const std::size_t out = last ? cfg.embedding_dim : cfg.hidden_dims[i];
    const Activation act = last ? Activation::Identity : cfg.activation;
    if (cas[i]) {
      CasParams p(in, out, act, cfg.cas_cycles);
      uniform_init(p, rng);
      t.layers.emplace_back(std::move(p));
    } else {
      DenseLayer d{DenseParams(out, in), act};
      uniform_init(d.params, rng);
      t.layers.emplace_back(std::move(d));
    }
    in = out;
  }
  t.opt.resize(t.layers.size());
  return t;
}

using LayerCache = std::variant<DenseCache, CasCache>;

struct TowerCache {
  Features features;
  Vec input;
  std::vector<LayerCache> layers;
};

struct TowerResult {
  Vec embedding;
  TowerCache cache;
};

inline TowerResult tower_forward(const Tower& tower, const Features& x,
                                 std::span<const double> c_prev,
                                 std::span<const double> s_prev) {
  const TowerConfig& cfg = tower.config;
  check_dims(cfg.cts_dim, c_prev.size(), "tower_forward cross vector");
  check_dims(cfg.cms_dim, s_prev.size(), "tower_forward cascade vector");
  TowerResult r;
  r.cache.features = x;
  Vec& input = r.cache.input;
  input.assign(cfg.input_dim(), 0.0);
  tower.embedder.gather(x, input, 0);
  const std::size_t feat = cfg.features.width();
  std::copy(c_prev.begin(), c_prev.end(), input.begin() + static_cast<std::ptrdiff_t>(feat));
  std::copy(s_prev.begin(), s_prev.end(),
            input.begin() + static_cast<std::ptrdiff_t>(feat + cfg.cts_dim));

  Vec h = input;
  r.cache.layers.reserve(tower.layers.size());
  for (const Layer& layer : tower.layers) {
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      DenseResult out = dense_forward(d->params, h, d->act);
      h = std::move(out.output);
      r.cache.layers.emplace_back(std::move(out.cache));
    } else {
      CasResult out = cas_forward(std::get<CasParams>(layer), h);
      h = std::move(out.output);
      r.cache.layers.emplace_back(std::move(out.cache));
    }
  }
  r.embedding = std::move(h);
  return r;
}

struct LayerGradients {
  DenseGrads theta;
  DenseGrads phi;  // empty for plain dense layers
};

struct TowerGradients {
  std::vector<LayerGradients> layers;
  std::vector<SparseRowGrad> rows;
  // dL/d(full input), including the cache columns. Reported for inspection;
  // the cache columns are never applied to anything.
  Vec grad_input;

  bool finite() const {
    for (const auto& l : layers) {
      if (!l.theta.finite() || !l.phi.finite()) return false;
    }
    for (const auto& r : rows)
      if (!all_finite(r.grad)) return false;
    return true;
  }
};

inline TowerGradients tower_backward(const Tower& tower, const TowerCache& cache,
                                     std::span<const double> grad_embedding) {
  check_dims(tower.config.embedding_dim, grad_embedding.size(), "tower_backward grad");
  if (cache.layers.size() != tower.layers.size())
    throw ShapeError("tower_backward: cache has " + std::to_string(cache.layers.size()) +
                     " layers, tower has " + std::to_string(tower.layers.size()));
  TowerGradients g;
  g.layers.resize(tower.layers.size());
  Vec grad(grad_embedding.begin(), grad_embedding.end());
  for (std::size_t i = tower.layers.size(); i-- > 0;) {
    const Layer& layer = tower.layers[i];
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      const auto* c = std::get_if<DenseCache>(&cache.layers[i]);
      if (c == nullptr) throw ShapeError("tower_backward: layer kind mismatch");
      g.layers[i].theta = DenseGrads(d->params);
      Vec gx(d->params.in_dim(), 0.0);
      dense_backward_into(d->params, *c, grad, g.layers[i].theta, gx);
      grad = std::move(gx);
    } else {
      const auto& p = std::get<CasParams>(layer);
      const auto* c = std::get_if<CasCache>(&cache.layers[i]);
      if (c == nullptr) throw ShapeError("tower_backward: layer kind mismatch");
      CasGradients cg(p);
      cas_backward_into(p, *c, grad, cg);
      g.layers[i].theta = std::move(cg.theta);
      g.layers[i].phi = std::move(cg.phi);
      grad = std::move(cg.grad_input);
    }
  }
  tower.embedder.scatter(cache.features, grad, 0, g.rows);
  g.grad_input = std::move(grad);
  return g;
}

// Refuses the whole update if any gradient is non-finite.
inline void apply_tower_gradients(Tower& tower, const TowerGradients& g,
                                  const OptimizerConfig& opt) {
  if (!g.finite()) throw NumericError("tower update refused: non-finite gradient");
  for (std::size_t i = 0; i < tower.layers.size(); ++i) {
    Layer& layer = tower.layers[i];
    if (auto* d = std::get_if<DenseLayer>(&layer)) {
      optimizer_step(opt, tower.opt[i].theta, d->params, g.layers[i].theta);
    } else {
      auto& p = std::get<CasParams>(layer);
      optimizer_step(opt, tower.opt[i].theta, p.theta, g.layers[i].theta);
      optimizer_step(opt, tower.opt[i].phi, p.phi, g.layers[i].phi);
    }
  }
  tower.embedder.apply(g.rows, opt);
}

// ---------------------------------------------------------------------------

inline double score(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size())
    throw ShapeError("score: length mismatch " + std::to_string(u.size()) + " vs " +
                     std::to_string(v.size()));
  return dot(u, v);
}

inline constexpr double kProbClamp = 1e-7;

struct BceResult {
  double loss = 0.0;
  double grad = 0.0;  // dloss / dlogit
};

// Sigmoid cross-entropy on a logit. The probability is clamped for the loss
// only; the gradient is the exact sigmoid(p) - y.
inline BceResult bce_loss(double logit, int label) {
  if (label != 0 && label != 1)
    throw std::invalid_argument("bce_loss: label must be 0 or 1, got " + std::to_string(label));
  const double prob = sigmoid(logit);
  const double q = std::clamp(prob, kProbClamp, 1.0 - kProbClamp);
  BceResult r;
  r.loss = label == 1 ? -std::log(q) : -std::log(1.0 - q);
  r.grad = prob - static_cast<double>(label);
  return r;
}

struct ModelConfig {
  TowerConfig user;
  TowerConfig item;

  void validate() const {
    user.validate();
    item.validate();
    if (user.embedding_dim != item.embedding_dim)
      throw ShapeError("model: user embedding dim " + std::to_string(user.embedding_dim) +
                       " != item embedding dim " + std::to_string(item.embedding_dim));
  }
};

struct TwoTowerModel {
  Tower user;
  Tower item;
  bool operator==(const TwoTowerModel&) const = default;
};

inline TwoTowerModel build_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  return TwoTowerModel{build_tower(cfg.user, "user", seed), build_tower(cfg.item, "item", seed)};
}

// Inputs of one scoring pass. Cache vectors may be empty when their dim is 0.
struct PairInputs {
  const Features* user = nullptr;
  const Features* item = nullptr;
  std::span<const double> c_user, s_user, c_item, s_item;
};

struct ModelForward {
  Vec u;
  Vec v;
  double score = 0.0;
  TowerCache user_cache;
  TowerCache item_cache;
};

inline ModelForward model_forward(const TwoTowerModel& m, const PairInputs& in) {
  ModelForward f;
  TowerResult ur = tower_forward(m.user, *in.user, in.c_user, in.s_user);
  TowerResult vr = tower_forward(m.item, *in.item, in.c_item, in.s_item);
  f.u = std::move(ur.embedding);
  f.v = std::move(vr.embedding);
  f.user_cache = std::move(ur.cache);
  f.item_cache = std::move(vr.cache);
  f.score = score(f.u, f.v);
  return f;
}

struct ModelGradients {
  TowerGradients user;
  TowerGradients item;
  bool finite() const { return user.finite() && item.finite(); }
};

inline ModelGradients model_backward(const TwoTowerModel& m, const ModelForward& fwd,
                                     double dloss_dp) {
  check_dims(fwd.u.size(), fwd.v.size(), "model_backward embeddings");
  Vec gu(fwd.u.size()), gv(fwd.v.size());
  for (std::size_t i = 0; i < gu.size(); ++i) {
    gu[i] = dloss_dp * fwd.v[i];
    gv[i] = dloss_dp * fwd.u[i];
  }
  ModelGradients g;
  g.user = tower_backward(m.user, fwd.user_cache, gu);
  g.item = tower_backward(m.item, fwd.item_cache, gv);
  return g;
}

inline void apply_model_gradients(TwoTowerModel& m, const ModelGradients& g,
                                  const OptimizerConfig& opt) {
  if (!g.finite()) throw NumericError("model update refused: non-finite gradient");
  apply_tower_gradients(m.user, g.user, opt);
  apply_tower_gradients(m.item, g.item, opt);
}

}  // namespace cs3
