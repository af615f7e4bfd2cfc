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

// Synthetic drifting latent-factor click stream.
//
// Users and items carry unit latent vectors; item latents rotate over time.
// A click is Bernoulli(sigmoid(scale * <p_u, q_i(t)> + bias + noise)), with
// the bias calibrated to the target positive rate. Users and items arrive
// progressively, so late traffic is dominated by entities with little
// history.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "cs3/nn_core.hpp"
#include "cs3/stream_io.hpp"

namespace cs3 {

struct SynthSpec {
  std::size_t n_users = 20000;
  std::size_t n_items = 2000;
  std::size_t latent_dim = 8;
  double noise = 0.5;
  double drift_rate = 1e-5;  // radians of item rotation per event
  double positive_rate = 0.3;
  std::size_t length = 200000;
  std::uint64_t seed = 7;
  double signal_scale = 8.0;
  std::size_t dense_features = 2;
  double dense_noise = 1.0;
  std::size_t segment_bits = 3;  // categorical segment from latent signs
  double arrival_span = 0.9;     // fraction of the stream over which entities arrive
  std::uint64_t max_label_delay = 50;

  void validate() const {
    if (n_users == 0) throw std::invalid_argument("synth.n_users must be positive");
    if (n_items == 0) throw std::invalid_argument("synth.n_items must be positive");
    if (latent_dim == 0) throw std::invalid_argument("synth.latent_dim must be positive");
    if (length == 0) throw std::invalid_argument("synth.length must be positive");
    if (!(noise >= 0.0)) throw std::invalid_argument("synth.noise must be >= 0");
    if (!(drift_rate >= 0.0)) throw std::invalid_argument("synth.drift_rate must be >= 0");
    if (!(positive_rate > 0.0 && positive_rate < 1.0))
      throw std::invalid_argument("synth.positive_rate must be in (0,1)");
    if (!(signal_scale >= 0.0)) throw std::invalid_argument("synth.signal_scale must be >= 0");
    if (!(dense_noise >= 0.0)) throw std::invalid_argument("synth.dense_noise must be >= 0");
    if (segment_bits > latent_dim || segment_bits > 16)
      throw std::invalid_argument("synth.segment_bits must be <= min(latent_dim, 16)");
    if (!(arrival_span >= 0.0 && arrival_span <= 1.0))
      throw std::invalid_argument("synth.arrival_span must be in [0,1]");
  }
};

struct SynthStream {
  Stream stream;
  // Logit of the generating model without the noise term per event, in stream order.
  std::vector<double> true_logits;
};

namespace detail {

inline Vec unit_gaussian(std::mt19937_64& rng, std::size_t d) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec v(d);
  double n2 = 0.0;
  for (auto& x : v) {
    x = normal(rng);
    n2 += x * x;
  }
  const double inv = 1.0 / std::sqrt(std::max(n2, 1e-300));
  for (auto& x : v) x *= inv;
  return v;
}

// Rotates consecutive coordinate pairs by `angle`.
inline void rotate_pairs(const Vec& in, double angle, Vec& out) {
  const double c = std::cos(angle), s = std::sin(angle);
  out = in;
  for (std::size_t k = 0; k + 1 < in.size(); k += 2) {
    out[k] = c * in[k] - s * in[k + 1];
    out[k + 1] = s * in[k] + c * in[k + 1];
  }
}

inline std::uint64_t segment_of(const Vec& v, std::size_t bits) {
  std::uint64_t s = 0;
  for (std::size_t k = 0; k < bits; ++k) s |= static_cast<std::uint64_t>(v[k] > 0.0) << k;
  return s;
}

// Entities arrive uniformly over the first `span` of the stream; picks are
// biased towards recent arrivals.
inline std::size_t pick_entity(std::mt19937_64& rng, std::size_t n, std::size_t t,
                               std::size_t length, double span) {
  std::size_t active = n;
  if (span > 0.0) {
    const double frac = (static_cast<double>(t) + 1.0) / (span * static_cast<double>(length));
    active = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::ceil(frac * static_cast<double>(n))), 1, n);
  }
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double r = uni(rng);
  const auto back = static_cast<std::size_t>(r * r * static_cast<double>(active));
  return active - 1 - std::min(back, active - 1);
}

inline double mean_sigmoid(const std::vector<double>& logits, double bias) {
  double s = 0.0;
  for (double l : logits) s += sigmoid(l + bias);
  return s / static_cast<double>(logits.size());
}

}  // namespace detail

inline StreamSchema synth_schema(const SynthSpec& spec) {
  StreamSchema s;
  s.user_categorical = {"id", "segment"};
  s.item_categorical = {"id", "category"};
  for (std::size_t k = 0; k < spec.dense_features; ++k) {
    s.user_dense.push_back(std::to_string(k));
    s.item_dense.push_back(std::to_string(k));
  }
  return s;
}

inline SynthStream generate_stream(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::vector<Vec> users(spec.n_users), items(spec.n_items);
  for (auto& p : users) p = detail::unit_gaussian(rng, spec.latent_dim);
  for (auto& q : items) q = detail::unit_gaussian(rng, spec.latent_dim);

  struct Draw {
    std::size_t u, i;
    double logit;  // scaled dot plus noise, before the bias
    double clean;
  };
  std::vector<Draw> draws(spec.length);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec q_t;
  for (std::size_t t = 0; t < spec.length; ++t) {
    Draw& d = draws[t];
    d.u = detail::pick_entity(rng, spec.n_users, t, spec.length, spec.arrival_span);
    d.i = detail::pick_entity(rng, spec.n_items, t, spec.length, spec.arrival_span);
    detail::rotate_pairs(items[d.i], spec.drift_rate * static_cast<double>(t), q_t);
    d.clean = spec.signal_scale * dot(users[d.u], q_t);
    d.logit = d.clean + spec.noise * normal(rng);
  }

  // Bisection for the bias that hits the target positive rate.
  std::vector<double> logits(spec.length);
  for (std::size_t t = 0; t < spec.length; ++t) logits[t] = draws[t].logit;
  double lo = -50.0, hi = 50.0;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    (detail::mean_sigmoid(logits, mid) < spec.positive_rate ? lo : hi) = mid;
  }
  const double bias = 0.5 * (lo + hi);

  SynthStream out;
  out.stream.schema = synth_schema(spec);
  out.stream.events.reserve(spec.length);
  out.true_logits.reserve(spec.length);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::uniform_int_distribution<std::uint64_t> delay(0, spec.max_label_delay);
  for (std::size_t t = 0; t < spec.length; ++t) {
    const Draw& d = draws[t];
    detail::rotate_pairs(items[d.i], spec.drift_rate * static_cast<double>(t), q_t);
    InteractionEvent e;
    e.event_time = 10 * static_cast<std::uint64_t>(t);
    e.label_ready_time = e.event_time + delay(rng);
    e.user_id = d.u;
    e.item_id = d.i;
    e.label = uni(rng) < sigmoid(d.logit + bias) ? 1 : 0;
    e.user.categorical = {d.u, detail::segment_of(users[d.u], spec.segment_bits)};
    e.item.categorical = {d.i, detail::segment_of(items[d.i], spec.segment_bits)};
    for (std::size_t k = 0; k < spec.dense_features; ++k) {
      const std::size_t c = k % spec.latent_dim;
      e.user.dense.push_back(users[d.u][c] + spec.dense_noise * normal(rng));
      e.item.dense.push_back(q_t[c] + spec.dense_noise * normal(rng));
    }
    out.stream.events.push_back(std::move(e));
    out.true_logits.push_back(d.clean + bias);
  }
  return out;
}

}  // namespace cs3
