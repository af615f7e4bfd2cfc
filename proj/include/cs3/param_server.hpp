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

// Gradient-trained sparse embedding tables. Rows are created lazily on first
// write; reads of absent rows return the value the row would be created with,
// so a read never has to mutate the table.

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cs3/nn_core.hpp"

namespace cs3 {

inline constexpr std::uint64_t kDefaultHashModulus = 1ull << 20;

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

struct SparseRow {
  Vec value;
  MomentState moments;
  bool operator==(const SparseRow&) const = default;
};

class SparseTable {
 public:
  SparseTable() = default;
  SparseTable(std::string field, std::size_t dim,
              std::uint64_t modulus = kDefaultHashModulus,
              std::uint64_t seed = 0, double init_scale = 0.05)
      : field_(std::move(field)), dim_(dim), modulus_(modulus), seed_(seed),
        init_scale_(init_scale) {
    if (dim_ == 0) throw ShapeError("sparse table '" + field_ + "': dim must be > 0");
    if (modulus_ == 0)
      throw std::invalid_argument("sparse table '" + field_ + "': modulus must be > 0");
  }

  const std::string& field() const { return field_; }
  std::size_t dim() const { return dim_; }
  std::uint64_t modulus() const { return modulus_; }
  std::uint64_t seed() const { return seed_; }
  double init_scale() const { return init_scale_; }
  std::size_t size() const { return rows_.size(); }

  std::uint64_t slot(std::uint64_t id) const { return id % modulus_; }

  // Deterministic initial value of a slot: a function of (field, slot, seed).
  Vec initial_row(std::uint64_t slot_id) const {
    std::uint64_t state = seed_ ^ fnv1a64(field_) ^ (slot_id * 0xd1342543de82ef95ull);
    Vec v(dim_);
    for (double& x : v) {
      const double u = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
      x = (2.0 * u - 1.0) * init_scale_;
    }
    return v;
  }

  // Read without materializing.
  Vec peek(std::uint64_t id) const {
    auto it = rows_.find(slot(id));
    if (it != rows_.end()) return it->second.value;
    return initial_row(slot(id));
  }

  bool contains(std::uint64_t id) const { return rows_.count(slot(id)) != 0; }

  // Returns the row for `id`, creating it on first use.
  const Vec& lookup_embedding(std::uint64_t id) { return materialize(id).value; }

  // Mutable view of a materialized row; for tests and gradient checks.
  std::span<double> mutable_embedding(std::uint64_t id) { return materialize(id).value; }

  void apply_sparse_grad(std::uint64_t id, std::span<const double> grad,
                         const OptimizerConfig& opt) {
    check_dims(dim_, grad.size(), "apply_sparse_grad");
    if (!all_finite(grad))
      throw NumericError("apply_sparse_grad: non-finite gradient for field '" +
                         field_ + "', id " + std::to_string(id));
    SparseRow& row = materialize(id);
    apply_update(opt, row.moments, row.value, grad);
  }

  // Rows sorted by slot, for canonical export.
  std::vector<std::pair<std::uint64_t, const SparseRow*>> sorted_rows() const {
    std::vector<std::pair<std::uint64_t, const SparseRow*>> out;
    out.reserve(rows_.size());
    for (const auto& [k, row] : rows_) out.emplace_back(k, &row);
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    return out;
  }

  // Used by snapshot import; the slot must already be reduced.
  void insert_row(std::uint64_t slot_id, SparseRow row) {
    if (slot_id >= modulus_)
      throw ShapeError("sparse table '" + field_ + "': slot " + std::to_string(slot_id) +
                       " outside modulus " + std::to_string(modulus_));
    check_dims(dim_, row.value.size(), "sparse row");
    if (!row.moments.m.empty()) {
      check_dims(dim_, row.moments.m.size(), "sparse row moments");
      check_dims(dim_, row.moments.v.size(), "sparse row moments");
    }
    rows_[slot_id] = std::move(row);
  }

  bool operator==(const SparseTable& o) const {
    return field_ == o.field_ && dim_ == o.dim_ && modulus_ == o.modulus_ &&
           seed_ == o.seed_ && init_scale_ == o.init_scale_ && rows_ == o.rows_;
  }

 private:
  SparseRow& materialize(std::uint64_t id) {
    const std::uint64_t s = slot(id);
    auto it = rows_.find(s);
    if (it == rows_.end()) {
      it = rows_.emplace(s, SparseRow{initial_row(s), {}}).first;
    }
    return it->second;
  }

  std::string field_;
  std::size_t dim_ = 0;
  std::uint64_t modulus_ = kDefaultHashModulus;
  std::uint64_t seed_ = 0;
  double init_scale_ = 0.05;
  std::unordered_map<std::uint64_t, SparseRow> rows_;
};

}  // namespace cs3
