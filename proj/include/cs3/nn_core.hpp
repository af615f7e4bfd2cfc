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

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cs3 {

// Raised for any dimension disagreement between parameters, caches and inputs.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when a numeric quantity that must be finite is not.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Vec = std::vector<double>;

inline void check_dims(std::size_t expected, std::size_t actual,
                       const char* what) {
  if (expected != actual) {
    throw ShapeError(std::string(what) + ": expected dim " +
                     std::to_string(expected) + ", got " +
                     std::to_string(actual));
  }
}

// A double is NaN or infinite exactly when all exponent bits are set.
inline bool all_finite(std::span<const double> v) {
  constexpr std::uint64_t kExp = 0x7ff0000000000000ull;
  std::uint64_t bad = 0;
  for (double x : v)
    bad |= static_cast<std::uint64_t>((std::bit_cast<std::uint64_t>(x) & kExp) == kExp);
  return bad == 0;
}

// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }
  void zero() { std::fill(data.begin(), data.end(), 0.0); }
  bool operator==(const Matrix&) const = default;
};

enum class Activation : std::uint8_t { Identity = 0, ReLU = 1, Sigmoid = 2 };

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double activate(Activation act, double pre) {
  switch (act) {
    case Activation::Identity:
      return pre;
    case Activation::ReLU:
      return pre > 0.0 ? pre : 0.0;
    case Activation::Sigmoid:
      return sigmoid(pre);
  }
  return pre;
}

// Derivative in terms of the pre-activation and its output. ReLU'(0) = 0.
inline double activation_grad(Activation act, double pre, double out) {
  switch (act) {
    case Activation::Identity:
      return 1.0;
    case Activation::ReLU:
      return pre > 0.0 ? 1.0 : 0.0;
    case Activation::Sigmoid:
      return out * (1.0 - out);
  }
  return 1.0;
}

inline const char* to_string(Activation act) {
  switch (act) {
    case Activation::Identity:
      return "identity";
    case Activation::ReLU:
      return "relu";
    case Activation::Sigmoid:
      return "sigmoid";
  }
  return "?";
}

inline Activation parse_activation(const std::string& s) {
  if (s == "identity") return Activation::Identity;
  if (s == "relu") return Activation::ReLU;
  if (s == "sigmoid") return Activation::Sigmoid;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

// Weights and bias of one affine layer: y = W x + b.
struct DenseParams {
  Matrix weights;  // out_dim x in_dim
  Vec bias;        // out_dim

  DenseParams() = default;
  DenseParams(std::size_t out_dim, std::size_t in_dim)
      : weights(out_dim, in_dim), bias(out_dim, 0.0) {}

  std::size_t in_dim() const { return weights.cols; }
  std::size_t out_dim() const { return weights.rows; }
  std::size_t size() const { return weights.data.size() + bias.size(); }

  void validate() const {
    if (weights.rows != bias.size()) {
      throw ShapeError("dense params: weight rows " +
                       std::to_string(weights.rows) + " != bias length " +
                       std::to_string(bias.size()));
    }
    if (weights.data.size() != weights.rows * weights.cols) {
      throw ShapeError("dense params: weight storage does not match shape");
    }
  }
  bool operator==(const DenseParams&) const = default;
};

// Symmetric uniform init with limit sqrt(6 / (in + out)); bias starts at 0.
template <typename Rng>
void uniform_init(DenseParams& p, Rng& rng) {
  const double limit =
      std::sqrt(6.0 / static_cast<double>(p.in_dim() + p.out_dim()));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& w : p.weights.data) w = dist(rng);
  std::fill(p.bias.begin(), p.bias.end(), 0.0);
}

struct DenseGrads {
  Matrix grad_weights;
  Vec grad_bias;

  DenseGrads() = default;
  explicit DenseGrads(const DenseParams& like)
      : grad_weights(like.out_dim(), like.in_dim()),
        grad_bias(like.out_dim(), 0.0) {}

  void zero() {
    grad_weights.zero();
    std::fill(grad_bias.begin(), grad_bias.end(), 0.0);
  }
  void add(const DenseGrads& other) {
    for (std::size_t i = 0; i < grad_weights.data.size(); ++i)
      grad_weights.data[i] += other.grad_weights.data[i];
    for (std::size_t i = 0; i < grad_bias.size(); ++i)
      grad_bias[i] += other.grad_bias[i];
  }
  bool finite() const {
    return all_finite(grad_weights.data) && all_finite(grad_bias);
  }
};

struct GradBundle : DenseGrads {
  Vec grad_input;

  GradBundle() = default;
  explicit GradBundle(const DenseParams& like)
      : DenseGrads(like), grad_input(like.in_dim(), 0.0) {}
};

struct DenseCache {
  Vec input;
  Vec pre;
  Vec output;
  Activation act = Activation::Identity;
};

struct DenseResult {
  Vec output;
  DenseCache cache;
};

namespace detail {

// pre = W x + b, accumulation in column order for every row.
inline void affine(const DenseParams& p, std::span<const double> x,
                   std::span<double> pre) {
  const std::size_t in = p.in_dim();
  const double* w = p.weights.data.data();
  for (std::size_t r = 0; r < p.out_dim(); ++r) {
    const double* wr = w + r * in;
    double acc = 0.0;
    for (std::size_t c = 0; c < in; ++c) acc += wr[c] * x[c];
    pre[r] = acc + p.bias[r];
  }
}

// Given delta = dL/dpre, accumulate dW, db and (optionally) dL/dx.
inline void affine_backward(const DenseParams& p, std::span<const double> x,
                            std::span<const double> delta, DenseGrads& acc,
                            std::span<double> grad_x) {
  const std::size_t in = p.in_dim();
  const double* w = p.weights.data.data();
  double* gw = acc.grad_weights.data.data();
  for (std::size_t r = 0; r < p.out_dim(); ++r) {
    const double d = delta[r];
    if (d == 0.0) continue;
    acc.grad_bias[r] += d;
    double* gwr = gw + r * in;
    const double* wr = w + r * in;
    for (std::size_t c = 0; c < in; ++c) gwr[c] += d * x[c];
    if (!grad_x.empty()) {
      for (std::size_t c = 0; c < in; ++c) grad_x[c] += d * wr[c];
    }
  }
}

}  // namespace detail

inline DenseResult dense_forward(const DenseParams& params,
                                 std::span<const double> x, Activation act) {
  check_dims(params.in_dim(), x.size(), "dense_forward input");
  DenseResult r;
  r.cache.input.assign(x.begin(), x.end());
  r.cache.pre.resize(params.out_dim());
  detail::affine(params, x, r.cache.pre);
  r.output.resize(params.out_dim());
  for (std::size_t i = 0; i < r.output.size(); ++i)
    r.output[i] = activate(act, r.cache.pre[i]);
  r.cache.output = r.output;
  r.cache.act = act;
  return r;
}

// Accumulating form used by layer stacks; grad_x may be empty to skip it.
inline void dense_backward_into(const DenseParams& params,
                                const DenseCache& cache,
                                std::span<const double> grad_out,
                                DenseGrads& acc, std::span<double> grad_x) {
  check_dims(params.out_dim(), grad_out.size(), "dense_backward grad_out");
  if (cache.input.size() != params.in_dim() ||
      cache.pre.size() != params.out_dim() ||
      cache.output.size() != params.out_dim()) {
    throw ShapeError("dense_backward: cache does not match params (" +
                     std::to_string(params.out_dim()) + "x" +
                     std::to_string(params.in_dim()) + ")");
  }
  Vec delta(params.out_dim());
  for (std::size_t i = 0; i < delta.size(); ++i)
    delta[i] = grad_out[i] *
               activation_grad(cache.act, cache.pre[i], cache.output[i]);
  detail::affine_backward(params, cache.input, delta, acc, grad_x);
}

inline GradBundle dense_backward(const DenseParams& params,
                                 const DenseCache& cache,
                                 std::span<const double> grad_out) {
  GradBundle g(params);
  dense_backward_into(params, cache, grad_out, g, g.grad_input);
  return g;
}

// Central-difference gradient of f at `at`.
inline Vec finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                            std::span<const double> at, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_grad: eps must be > 0");
  Vec x(at.begin(), at.end());
  Vec grad(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + eps;
    const double fp = f(x);
    x[i] = orig - eps;
    const double fm = f(x);
    x[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_diff_grad: non-finite evaluation at coordinate " +
                         std::to_string(i));
    }
    grad[i] = (fp - fm) / (2.0 * eps);
  }
  return grad;
}

// |a - b| scaled by max(|a|, |b|, floor). The floor stops coordinates whose
// true gradient is ~0 from reporting pure round-off as relative error.
inline double relative_error(double a, double b, double floor = 1e-4) {
  const double denom = std::max({std::abs(a), std::abs(b), floor});
  return std::abs(a - b) / denom;
}

inline double max_relative_error(std::span<const double> a,
                                 std::span<const double> b,
                                 double floor = 1e-4) {
  check_dims(a.size(), b.size(), "max_relative_error");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, relative_error(a[i], b[i], floor));
  return worst;
}

// ---------------------------------------------------------------------------
// Optimizers

enum class OptimizerKind : std::uint8_t { SGD = 0, Adam = 1 };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Learning rate for sparse embedding rows; 0 means learning_rate.
  double sparse_learning_rate = 0.0;

  OptimizerConfig for_sparse() const {
    OptimizerConfig c = *this;
    if (sparse_learning_rate > 0.0) c.learning_rate = sparse_learning_rate;
    return c;
  }

  void validate() const {
    if (!(sparse_learning_rate >= 0.0) || !std::isfinite(sparse_learning_rate))
      throw std::invalid_argument("optimizer: sparse_learning_rate must be >= 0");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
      throw std::invalid_argument("optimizer: learning_rate must be > 0");
    if (kind == OptimizerKind::Adam) {
      if (!(beta1 > 0.0 && beta1 < 1.0))
        throw std::invalid_argument("optimizer: beta1 must be in (0,1)");
      if (!(beta2 > 0.0 && beta2 < 1.0))
        throw std::invalid_argument("optimizer: beta2 must be in (0,1)");
      if (!(epsilon > 0.0))
        throw std::invalid_argument("optimizer: epsilon must be > 0");
    }
  }
};

// Moment accumulators for one flat parameter block. Empty until the first
// Adam step so SGD blocks carry no extra storage.
struct MomentState {
  Vec m;
  Vec v;
  std::uint64_t step = 0;
  bool operator==(const MomentState&) const = default;
};

// Applies one update in place. Grads must already be verified finite.
inline void apply_update(const OptimizerConfig& cfg, MomentState& st,
                         std::span<double> params,
                         std::span<const double> grads) {
  check_dims(params.size(), grads.size(), "optimizer grads");
  ++st.step;
  if (cfg.kind == OptimizerKind::SGD) {
    for (std::size_t i = 0; i < params.size(); ++i)
      params[i] -= cfg.learning_rate * grads[i];
    return;
  }
  if (st.m.size() != params.size()) {
    st.m.assign(params.size(), 0.0);
    st.v.assign(params.size(), 0.0);
  }
  const double t = static_cast<double>(st.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double lr = cfg.learning_rate, eps = cfg.epsilon;
  double* __restrict m = st.m.data();
  double* __restrict v = st.v.data();
  double* __restrict p = params.data();
  const double* __restrict g = grads.data();
  // mhat / (sqrt(vhat) + eps) with the bias corrections folded into two
  // scalars, leaving one divide and one sqrt per element.
  const double step_size = lr / c1;
  const double inv_sqrt_c2 = 1.0 / std::sqrt(c2);
  // Moments of units that stop receiving gradient decay geometrically; they
  // are flushed to zero before reaching the subnormal range, where arithmetic
  // is orders of magnitude slower. The update they would contribute is below
  // 1e-100 of the learning rate.
  constexpr double kFlush = 1e-200;
  const std::size_t n = params.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double mi = b1 * m[i] + (1.0 - b1) * g[i];
    const double vi = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
    m[i] = std::abs(mi) < kFlush ? 0.0 : mi;
    v[i] = vi < kFlush ? 0.0 : vi;
    p[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_c2 + eps);
  }
}

struct OptimizerState {
  MomentState weights;
  MomentState bias;

  std::uint64_t step() const { return weights.step; }
  bool operator==(const OptimizerState&) const = default;
};

inline void optimizer_step(const OptimizerConfig& cfg, OptimizerState& state,
                           DenseParams& params, const DenseGrads& grads) {
  if (grads.grad_weights.rows != params.out_dim() ||
      grads.grad_weights.cols != params.in_dim() ||
      grads.grad_bias.size() != params.out_dim()) {
    throw ShapeError("optimizer_step: gradient shape does not match params");
  }
  if (!grads.finite())
    throw NumericError("optimizer_step: non-finite gradient, step refused");
  apply_update(cfg, state.weights, params.weights.data,
               grads.grad_weights.data);
  apply_update(cfg, state.bias, params.bias, grads.grad_bias);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  check_dims(a.size(), b.size(), "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace cs3
