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

// Shared pieces for networks that start from categorical embeddings plus dense
// features: the feature layout and the embedding gather/scatter.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cs3/nn_core.hpp"
#include "cs3/param_server.hpp"

namespace cs3 {

struct CategoricalField {
  std::string name;
  std::size_t dim = 0;
  bool operator==(const CategoricalField&) const = default;
};

struct FeatureSpec {
  std::vector<CategoricalField> categorical;
  std::size_t dense_count = 0;

  std::size_t width() const {
    std::size_t w = dense_count;
    for (const auto& f : categorical) w += f.dim;
    return w;
  }
  bool operator==(const FeatureSpec&) const = default;
};

// Raw features of one entity: one id per categorical field, then dense reals.
struct Features {
  std::vector<std::uint64_t> categorical;
  Vec dense;
  bool operator==(const Features&) const = default;
};

struct SparseRowGrad {
  std::size_t table = 0;
  std::uint64_t id = 0;
  Vec grad;
};

class FeatureEmbedder {
 public:
  FeatureEmbedder() = default;
  FeatureEmbedder(const FeatureSpec& spec, const std::string& prefix,
                  std::uint64_t modulus, std::uint64_t seed, double init_scale)
      : spec_(spec) {
    for (const auto& f : spec.categorical)
      tables_.emplace_back(prefix + f.name, f.dim, modulus, seed, init_scale);
  }

  const FeatureSpec& spec() const { return spec_; }
  std::vector<SparseTable>& tables() { return tables_; }
  const std::vector<SparseTable>& tables() const { return tables_; }

  void check(const Features& f) const {
    check_dims(spec_.categorical.size(), f.categorical.size(), "categorical feature count");
    check_dims(spec_.dense_count, f.dense.size(), "dense feature count");
  }

  // Writes embeddings then dense features starting at out[offset].
  void gather(const Features& f, Vec& out, std::size_t offset) const {
    check(f);
    std::size_t pos = offset;
    for (std::size_t t = 0; t < tables_.size(); ++t) {
      const Vec row = tables_[t].peek(f.categorical[t]);
      std::copy(row.begin(), row.end(), out.begin() + static_cast<std::ptrdiff_t>(pos));
      pos += row.size();
    }
    std::copy(f.dense.begin(), f.dense.end(), out.begin() + static_cast<std::ptrdiff_t>(pos));
  }

  // Splits dL/d(input) back into per-row gradients; dense columns are dropped.
  void scatter(const Features& f, std::span<const double> grad_input, std::size_t offset,
               std::vector<SparseRowGrad>& out) const {
    std::size_t pos = offset;
    for (std::size_t t = 0; t < tables_.size(); ++t) {
      const std::size_t d = tables_[t].dim();
      SparseRowGrad g{t, f.categorical[t], Vec(grad_input.begin() + static_cast<std::ptrdiff_t>(pos),
                                                grad_input.begin() + static_cast<std::ptrdiff_t>(pos + d))};
      out.push_back(std::move(g));
      pos += d;
    }
  }

  void apply(const std::vector<SparseRowGrad>& grads, const OptimizerConfig& opt) {
    const OptimizerConfig sparse = opt.for_sparse();
    for (const auto& g : grads) tables_.at(g.table).apply_sparse_grad(g.id, g.grad, sparse);
  }

  bool operator==(const FeatureEmbedder&) const = default;

 private:
  FeatureSpec spec_;
  std::vector<SparseTable> tables_;
};

}  // namespace cs3
