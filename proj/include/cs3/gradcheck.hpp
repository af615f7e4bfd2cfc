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

// Central finite-difference checks of every backward pass: dense layers,
// CAS layers, the two-tower model and the cascade net.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cs3/cas_layer.hpp"
#include "cs3/cascade_model.hpp"
#include "cs3/nn_core.hpp"
#include "cs3/tower_model.hpp"

namespace cs3 {

struct GradcheckOptions {
  std::size_t instances = 50;
  std::uint64_t seed = 1;
  double eps = 1e-6;
  // Coordinates sampled per parameter block in the full-model checks.
  std::size_t coords_per_block = 8;
};

struct GradcheckReport {
  double dense = 0.0;
  double cas = 0.0;
  double model = 0.0;
  double cascade = 0.0;
  std::size_t instances = 0;

  double worst() const { return std::max({dense, cas, model, cascade}); }
};

namespace detail {

inline void fill_uniform(std::span<double> v, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& x : v) x = d(rng);
}

// Perturbs `param` in place and compares the numeric slope of `loss` with
// `analytic`.
inline double check_coordinate(double& param, double analytic, const std::function<double()>& loss,
                               double eps) {
  const double orig = param;
  param = orig + eps;
  const double fp = loss();
  param = orig - eps;
  const double fm = loss();
  param = orig;
  return relative_error(analytic, (fp - fm) / (2.0 * eps));
}

inline double check_block(std::span<double> params, std::span<const double> grads,
                          const std::function<double()>& loss, std::size_t coords,
                          std::mt19937_64& rng, double eps) {
  check_dims(params.size(), grads.size(), "gradcheck block");
  double worst = 0.0;
  if (params.empty()) return worst;
  std::uniform_int_distribution<std::size_t> pick(0, params.size() - 1);
  const std::size_t n = std::min(coords, params.size());
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = coords >= params.size() ? k : pick(rng);
    worst = std::max(worst, check_coordinate(params[i], grads[i], loss, eps));
  }
  return worst;
}

inline Features random_features(const FeatureSpec& spec, std::mt19937_64& rng) {
  Features f;
  std::uniform_int_distribution<std::uint64_t> id(0, 1000);
  for (std::size_t i = 0; i < spec.categorical.size(); ++i) f.categorical.push_back(id(rng));
  f.dense.resize(spec.dense_count);
  fill_uniform(f.dense, rng, -1.0, 1.0);
  return f;
}

inline void randomize(DenseParams& p, std::mt19937_64& rng, double scale) {
  fill_uniform(p.weights.data, rng, -scale, scale);
  fill_uniform(p.bias, rng, -scale, scale);
}

inline double check_tower_params(Tower& t, const TowerGradients& g,
                                 const std::function<double()>& loss,
                                 const GradcheckOptions& o, std::mt19937_64& rng) {
  double worst = 0.0;
  for (std::size_t l = 0; l < t.layers.size(); ++l) {
    auto block = [&](DenseParams& p, const DenseGrads& dg) {
      worst = std::max(worst, check_block(p.weights.data, dg.grad_weights.data, loss,
                                          o.coords_per_block, rng, o.eps));
      worst = std::max(worst, check_block(p.bias, dg.grad_bias, loss, o.coords_per_block,
                                          rng, o.eps));
    };
    if (auto* d = std::get_if<DenseLayer>(&t.layers[l])) {
      block(d->params, g.layers[l].theta);
    } else {
      auto& c = std::get<CasParams>(t.layers[l]);
      block(c.theta, g.layers[l].theta);
      block(c.phi, g.layers[l].phi);
    }
  }
  for (const auto& r : g.rows) {
    std::span<double> row = t.embedder.tables()[r.table].mutable_embedding(r.id);
    worst = std::max(worst, check_block(row, r.grad, loss, o.coords_per_block, rng, o.eps));
  }
  return worst;
}

}  // namespace detail

// Dense layer with a random linear readout; checks weights, bias and input.
inline double gradcheck_dense(const GradcheckOptions& o) {
  std::mt19937_64 rng(o.seed ^ 0xd1);
  std::uniform_int_distribution<std::size_t> dim(1, 8);
  double worst = 0.0;
  const Activation acts[] = {Activation::Identity, Activation::ReLU, Activation::Sigmoid};
  for (std::size_t n = 0; n < o.instances; ++n) {
    const Activation act = acts[n % 3];
    DenseParams p(dim(rng), dim(rng));
    detail::randomize(p, rng, 1.0);
    Vec x(p.in_dim()), w(p.out_dim());
    detail::fill_uniform(x, rng, -1.0, 1.0);
    detail::fill_uniform(w, rng, -1.0, 1.0);
    auto loss = [&] { return dot(dense_forward(p, x, act).output, w); };
    const DenseResult r = dense_forward(p, x, act);
    const GradBundle g = dense_backward(p, r.cache, w);
    worst = std::max(worst, detail::check_block(p.weights.data, g.grad_weights.data, loss,
                                                p.weights.data.size(), rng, o.eps));
    worst = std::max(worst, detail::check_block(p.bias, g.grad_bias, loss, p.bias.size(), rng,
                                                o.eps));
    worst = std::max(worst, detail::check_block(x, g.grad_input, loss, x.size(), rng, o.eps));
  }
  return worst;
}

// CAS layer with a live gate (random phi) and 1 or 2 cycles.
inline double gradcheck_cas(const GradcheckOptions& o) {
  std::mt19937_64 rng(o.seed ^ 0xca5);
  std::uniform_int_distribution<std::size_t> dim(1, 8);
  double worst = 0.0;
  const Activation acts[] = {Activation::Identity, Activation::ReLU, Activation::Sigmoid};
  for (std::size_t n = 0; n < o.instances; ++n) {
    CasParams p(dim(rng), dim(rng), acts[n % 3], 1 + static_cast<int>(n % 2));
    detail::randomize(p.theta, rng, 1.0);
    detail::randomize(p.phi, rng, 1.0);
    Vec x(p.in_dim()), w(p.out_dim());
    detail::fill_uniform(x, rng, -1.0, 1.0);
    detail::fill_uniform(w, rng, -1.0, 1.0);
    auto loss = [&] { return dot(cas_forward(p, x).output, w); };
    const CasResult r = cas_forward(p, x);
    const CasGradients g = cas_backward(p, r.cache, w);
    auto all = [&](std::span<double> a, std::span<const double> b) {
      worst = std::max(worst, detail::check_block(a, b, loss, a.size(), rng, o.eps));
    };
    all(p.theta.weights.data, g.theta.grad_weights.data);
    all(p.theta.bias, g.theta.grad_bias);
    all(p.phi.weights.data, g.phi.grad_weights.data);
    all(p.phi.bias, g.phi.grad_bias);
    all(x, g.grad_input);
  }
  return worst;
}

// Full two-tower model under BCE. Parameters are perturbed away from their
// init so CAS gates are live.
inline double gradcheck_model(const ModelConfig& cfg, const GradcheckOptions& o) {
  std::mt19937_64 rng(o.seed ^ 0x77);
  double worst = 0.0;
  for (std::size_t n = 0; n < o.instances; ++n) {
    TwoTowerModel m = build_model(cfg, o.seed + n);
    for (Tower* t : {&m.user, &m.item}) {
      for (auto& layer : t->layers) {
        if (auto* c = std::get_if<CasParams>(&layer)) detail::randomize(c->phi, rng, 0.3);
      }
    }
    const Features xu = detail::random_features(cfg.user.features, rng);
    const Features xv = detail::random_features(cfg.item.features, rng);
    Vec cu(cfg.user.cts_dim), su(cfg.user.cms_dim), cv(cfg.item.cts_dim), sv(cfg.item.cms_dim);
    for (Vec* v : {&cu, &su, &cv, &sv}) detail::fill_uniform(*v, rng, -0.5, 0.5);
    const int label = static_cast<int>(n % 2);
    const PairInputs in{&xu, &xv, cu, su, cv, sv};
    auto loss = [&] { return bce_loss(model_forward(m, in).score, label).loss; };
    const ModelForward f = model_forward(m, in);
    const ModelGradients g = model_backward(m, f, bce_loss(f.score, label).grad);
    worst = std::max(worst, detail::check_tower_params(m.user, g.user, loss, o, rng));
    worst = std::max(worst, detail::check_tower_params(m.item, g.item, loss, o, rng));
  }
  return worst;
}

inline double gradcheck_cascade(const CascadeConfig& cfg, const GradcheckOptions& o) {
  std::mt19937_64 rng(o.seed ^ 0xcc);
  double worst = 0.0;
  for (std::size_t n = 0; n < o.instances; ++n) {
    CascadeNet net = build_cascade(cfg, o.seed + n);
    // Zero biases behind a dead layer put every unit exactly on the ReLU kink,
    // where central differences see half a slope. Move them off it.
    for (auto& l : net.layers) detail::fill_uniform(l.bias, rng, -0.1, 0.1);
    const Features xu = detail::random_features(cfg.user_features, rng);
    const Features xv = detail::random_features(cfg.item_features, rng);
    const int label = static_cast<int>(n % 2);
    auto loss = [&] { return bce_loss(cascade_forward(net, xu, xv).logit, label).loss; };
    const CascadeForward f = cascade_forward(net, xu, xv);
    const CascadeGradients g = cascade_backward(net, f.cache, bce_loss(f.logit, label).grad);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      worst = std::max(worst, detail::check_block(net.layers[l].weights.data,
                                                  g.layers[l].grad_weights.data, loss,
                                                  o.coords_per_block, rng, o.eps));
      worst = std::max(worst, detail::check_block(net.layers[l].bias, g.layers[l].grad_bias,
                                                  loss, o.coords_per_block, rng, o.eps));
    }
    for (const auto& r : g.user_rows)
      worst = std::max(worst, detail::check_block(
                                  net.user_embedder.tables()[r.table].mutable_embedding(r.id),
                                  r.grad, loss, o.coords_per_block, rng, o.eps));
    for (const auto& r : g.item_rows)
      worst = std::max(worst, detail::check_block(
                                  net.item_embedder.tables()[r.table].mutable_embedding(r.id),
                                  r.grad, loss, o.coords_per_block, rng, o.eps));
  }
  return worst;
}

inline GradcheckReport run_gradcheck(const ModelConfig& model, const CascadeConfig& cascade,
                                     const GradcheckOptions& o) {
  GradcheckReport r;
  r.instances = o.instances;
  r.dense = gradcheck_dense(o);
  r.cas = gradcheck_cas(o);
  r.model = gradcheck_model(model, o);
  r.cascade = gradcheck_cascade(cascade, o);
  return r;
}

}  // namespace cs3
