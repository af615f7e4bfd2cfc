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

// Cycle-adaptive layer: a pre-forward through theta, a sigmoid gate phi that
// rescales the layer input feature-wise by 2e, and a cycle-forward that
// reapplies the same theta to the rescaled input.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cs3/nn_core.hpp"

namespace cs3 {

#ifdef CS3_EVAL_COUNTERS
struct CasEvalCounter {
  std::uint64_t theta_applications = 0;
  std::uint64_t phi_applications = 0;
};
inline thread_local CasEvalCounter cas_eval_counter;
#define CS3_COUNT_THETA() (++::cs3::cas_eval_counter.theta_applications)
#define CS3_COUNT_PHI() (++::cs3::cas_eval_counter.phi_applications)
#else
#define CS3_COUNT_THETA() ((void)0)
#define CS3_COUNT_PHI() ((void)0)
#endif

struct CasParams {
  DenseParams theta;  // in_dim -> out_dim, activation `act`
  DenseParams phi;    // out_dim -> in_dim, sigmoid gate
  Activation act = Activation::ReLU;
  int cycles = 1;

  CasParams() = default;
  CasParams(std::size_t in_dim, std::size_t out_dim, Activation a,
            int num_cycles = 1)
      : theta(out_dim, in_dim), phi(in_dim, out_dim), act(a),
        cycles(num_cycles) {}

  std::size_t in_dim() const { return theta.in_dim(); }
  std::size_t out_dim() const { return theta.out_dim(); }

  void validate() const {
    theta.validate();
    phi.validate();
    if (theta.in_dim() != phi.out_dim() || theta.out_dim() != phi.in_dim()) {
      throw ShapeError("cas params: cycle does not close (theta " +
                       std::to_string(theta.out_dim()) + "x" +
                       std::to_string(theta.in_dim()) + ", phi " +
                       std::to_string(phi.out_dim()) + "x" +
                       std::to_string(phi.in_dim()) + ")");
    }
    if (cycles < 1) throw std::invalid_argument("cas params: cycles must be >= 1");
  }
  bool operator==(const CasParams&) const = default;
};

// Theta gets the usual uniform init; phi stays zero so the gate starts at
// exactly 0.5 and the layer reproduces a plain dense layer.
template <typename Rng>
void uniform_init(CasParams& p, Rng& rng) {
  uniform_init(p.theta, rng);
  p.phi.weights.zero();
  std::fill(p.phi.bias.begin(), p.phi.bias.end(), 0.0);
}

struct CasCycleCache {
  Vec gate_pre;  // W' z + b'
  Vec gate;      // e
  Vec x_tilde;   // x * 2e
  Vec pre;       // W x_tilde + b
  Vec out;       // z'
};

struct CasCache {
  Vec x;
  Vec pre0;  // W x + b
  Vec z;     // sigma(pre0)
  std::vector<CasCycleCache> cycles;
};

struct CasResult {
  Vec output;
  CasCache cache;
};

struct CasGradients {
  DenseGrads theta;
  DenseGrads phi;
  Vec grad_input;

  CasGradients() = default;
  explicit CasGradients(const CasParams& p)
      : theta(p.theta), phi(p.phi), grad_input(p.in_dim(), 0.0) {}
};

inline CasResult cas_forward(const CasParams& params, std::span<const double> x) {
  check_dims(params.in_dim(), x.size(), "cas_forward input");
  const std::size_t in = params.in_dim();
  const std::size_t out = params.out_dim();
  CasResult r;
  CasCache& c = r.cache;
  c.x.assign(x.begin(), x.end());
  c.pre0.resize(out);
  c.z.resize(out);
  detail::affine(params.theta, x, c.pre0);
  CS3_COUNT_THETA();
  for (std::size_t i = 0; i < out; ++i) c.z[i] = activate(params.act, c.pre0[i]);

  c.cycles.resize(static_cast<std::size_t>(params.cycles));
  const Vec* prev = &c.z;
  for (CasCycleCache& cy : c.cycles) {
    cy.gate_pre.resize(in);
    cy.gate.resize(in);
    cy.x_tilde.resize(in);
    detail::affine(params.phi, *prev, cy.gate_pre);
    CS3_COUNT_PHI();
    for (std::size_t j = 0; j < in; ++j) {
      cy.gate[j] = sigmoid(cy.gate_pre[j]);
      cy.x_tilde[j] = x[j] * (2.0 * cy.gate[j]);
    }
    cy.pre.resize(out);
    cy.out.resize(out);
    detail::affine(params.theta, cy.x_tilde, cy.pre);
    CS3_COUNT_THETA();
    for (std::size_t i = 0; i < out; ++i) cy.out[i] = activate(params.act, cy.pre[i]);
    prev = &cy.out;
  }
  r.output = c.cycles.back().out;
  return r;
}

inline void cas_backward_into(const CasParams& params, const CasCache& cache,
                              std::span<const double> grad_out,
                              CasGradients& acc) {
  check_dims(params.out_dim(), grad_out.size(), "cas_backward grad_out");
  const std::size_t in = params.in_dim();
  const std::size_t out = params.out_dim();
  if (cache.x.size() != in || cache.z.size() != out || cache.pre0.size() != out ||
      cache.cycles.size() != static_cast<std::size_t>(params.cycles)) {
    throw ShapeError("cas_backward: cache does not match params");
  }
  for (const CasCycleCache& cy : cache.cycles) {
    if (cy.gate.size() != in || cy.x_tilde.size() != in || cy.pre.size() != out ||
        cy.out.size() != out) {
      throw ShapeError("cas_backward: cycle cache does not match params");
    }
  }

  // Gradient w.r.t. the output of the current cycle; walks back to z.
  Vec grad_z(grad_out.begin(), grad_out.end());
  Vec delta(out);
  Vec grad_xt(in);
  Vec gate_delta(in);
  for (std::size_t k = cache.cycles.size(); k-- > 0;) {
    const CasCycleCache& cy = cache.cycles[k];
    const Vec& cycle_input = k == 0 ? cache.z : cache.cycles[k - 1].out;
    for (std::size_t i = 0; i < out; ++i)
      delta[i] = grad_z[i] * activation_grad(params.act, cy.pre[i], cy.out[i]);
    std::fill(grad_xt.begin(), grad_xt.end(), 0.0);
    detail::affine_backward(params.theta, cy.x_tilde, delta, acc.theta, grad_xt);
    for (std::size_t j = 0; j < in; ++j) {
      // x_tilde = x * 2e: direct path into x, gate path into e.
      acc.grad_input[j] += grad_xt[j] * 2.0 * cy.gate[j];
      const double grad_e = grad_xt[j] * 2.0 * cache.x[j];
      gate_delta[j] = grad_e * cy.gate[j] * (1.0 - cy.gate[j]);
    }
    Vec grad_prev(out, 0.0);
    detail::affine_backward(params.phi, cycle_input, gate_delta, acc.phi, grad_prev);
    grad_z = std::move(grad_prev);
  }
  for (std::size_t i = 0; i < out; ++i)
    delta[i] = grad_z[i] * activation_grad(params.act, cache.pre0[i], cache.z[i]);
  detail::affine_backward(params.theta, cache.x, delta, acc.theta, acc.grad_input);
}

inline CasGradients cas_backward(const CasParams& params, const CasCache& cache,
                                 std::span<const double> grad_out) {
  CasGradients g(params);
  cas_backward_into(params, cache, grad_out, g);
  return g;
}

}  // namespace cs3
