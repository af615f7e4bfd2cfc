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

// EMA-updated per-entity caches. The cross-tower store absorbs the partner
// tower's embedding on positive interactions only; the cascade store absorbs
// the cascade representation on every interaction. Absent keys read as zero.
//
// These stores are deliberately disjoint from SparseTable: nothing here is
// reachable from an optimizer, and nothing in SparseTable applies an EMA.

#include <algorithm>
#include <compare>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cs3/nn_core.hpp"

namespace cs3 {

enum class Namespace : std::uint8_t { User = 0, Item = 1 };

struct EntityKey {
  Namespace ns = Namespace::User;
  std::uint64_t id = 0;

  auto operator<=>(const EntityKey&) const = default;
  bool operator==(const EntityKey&) const = default;
};

struct EntityKeyHash {
  std::size_t operator()(const EntityKey& k) const {
    std::uint64_t h = k.id * 0x9e3779b97f4a7c15ull;
    h ^= static_cast<std::uint64_t>(k.ns) + 0x632be59bd9b4e019ull + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

// Storage precision of a cache. Single mirrors the embedding server, which
// keeps f32 at rest; Double keeps full training precision.
enum class StoragePrecision : std::uint8_t { Double = 0, Single = 1 };

// One EMA component: decay * prior + (1 - decay) * incoming, clamped into the
// closed interval spanned by the two inputs so rounding can never overshoot.
inline double ema_component(double prior, double incoming, double decay) {
  const double lo = std::min(prior, incoming);
  const double hi = std::max(prior, incoming);
  return std::clamp(decay * prior + (1.0 - decay) * incoming, lo, hi);
}

// Single-precision variant shared with the embedding server so that both
// paths round identically.
inline float ema_component_f32(float prior, float incoming, float decay) {
  return static_cast<float>(ema_component(prior, incoming, decay));
}

struct CacheCounters {
  std::uint64_t reads = 0;
  std::uint64_t hits = 0;
  std::uint64_t writes = 0;
};

class CacheStore {
 public:
  CacheStore() = default;
  CacheStore(std::string name, std::size_t dim, double decay,
             StoragePrecision precision = StoragePrecision::Double)
      : name_(std::move(name)), dim_(dim), decay_(decay), precision_(precision) {
    if (dim_ == 0) throw ShapeError("cache '" + name_ + "': dim must be > 0");
    if (!(decay_ >= 0.0 && decay_ <= 1.0))
      throw std::invalid_argument("cache '" + name_ + "': decay must be in [0,1]");
  }

  const std::string& name() const { return name_; }
  std::size_t dim() const { return dim_; }
  double decay() const { return decay_; }
  StoragePrecision precision() const { return precision_; }
  std::size_t size() const { return entries_.size(); }
  const CacheCounters& counters() const { return counters_; }

  Vec read(const EntityKey& key) const {
    ++counters_.reads;
    auto it = entries_.find(key);
    if (it == entries_.end()) return Vec(dim_, 0.0);
    ++counters_.hits;
    return it->second;
  }

  bool contains(const EntityKey& key) const { return entries_.count(key) != 0; }

  // Applies one EMA step with the store's own decay.
  void ema_update(const EntityKey& key, std::span<const double> incoming) {
    ema_update(key, incoming, decay_);
  }

  void ema_update(const EntityKey& key, std::span<const double> incoming, double decay) {
    check_dims(dim_, incoming.size(), ("cache '" + name_ + "' update").c_str());
    if (!all_finite(incoming))
      throw NumericError("cache '" + name_ + "': non-finite incoming vector");
    ++counters_.writes;
    auto [it, inserted] = entries_.try_emplace(key, Vec(dim_, 0.0));
    Vec& cur = it->second;
    if (precision_ == StoragePrecision::Double) {
      for (std::size_t i = 0; i < dim_; ++i) cur[i] = ema_component(cur[i], incoming[i], decay);
    } else {
      const float d = static_cast<float>(decay);
      for (std::size_t i = 0; i < dim_; ++i)
        cur[i] = ema_component_f32(static_cast<float>(cur[i]),
                                   static_cast<float>(incoming[i]), d);
    }
  }

  // Canonical export order: (namespace, id).
  std::vector<std::pair<EntityKey, const Vec*>> sorted_entries() const {
    std::vector<std::pair<EntityKey, const Vec*>> out;
    out.reserve(entries_.size());
    for (const auto& [k, v] : entries_) out.emplace_back(k, &v);
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    return out;
  }

  void insert(const EntityKey& key, Vec value) {
    check_dims(dim_, value.size(), ("cache '" + name_ + "' insert").c_str());
    if (!all_finite(value)) throw NumericError("cache '" + name_ + "': non-finite entry");
    entries_[key] = std::move(value);
  }

  bool operator==(const CacheStore& o) const {
    return name_ == o.name_ && dim_ == o.dim_ && decay_ == o.decay_ &&
           precision_ == o.precision_ && entries_ == o.entries_;
  }

 private:
  std::string name_;
  std::size_t dim_ = 0;
  double decay_ = 0.9;
  StoragePrecision precision_ = StoragePrecision::Double;
  std::unordered_map<EntityKey, Vec, EntityKeyHash> entries_;
  mutable CacheCounters counters_;
};

inline EntityKey user_key(std::uint64_t id) { return {Namespace::User, id}; }
inline EntityKey item_key(std::uint64_t id) { return {Namespace::Item, id}; }

// Cross update: the user's vector absorbs the item embedding and vice versa.
// Negative interactions leave both stores untouched.
inline void cts_update(CacheStore& user_store, CacheStore& item_store, std::uint64_t user_id,
                       std::uint64_t item_id, std::span<const double> u_emb,
                       std::span<const double> v_emb, int label) {
  check_dims(user_store.dim(), v_emb.size(), "cts_update item embedding");
  check_dims(item_store.dim(), u_emb.size(), "cts_update user embedding");
  if (label != 1) return;
  user_store.ema_update(user_key(user_id), v_emb);
  item_store.ema_update(item_key(item_id), u_emb);
}

// Both sides absorb h_uv regardless of the label.
inline void cms_update(CacheStore& user_store, CacheStore& item_store, std::uint64_t user_id,
                       std::uint64_t item_id, std::span<const double> h_uv) {
  check_dims(user_store.dim(), h_uv.size(), "cms_update");
  check_dims(item_store.dim(), h_uv.size(), "cms_update");
  user_store.ema_update(user_key(user_id), h_uv);
  item_store.ema_update(item_key(item_id), h_uv);
}

// Where cascade vectors live during training: in this process, or in a
// remote embedding server.
class CmsBackend {
 public:
  virtual ~CmsBackend() = default;
  virtual std::size_t dim() const = 0;
  // Absent or unreachable keys read as zero.
  virtual Vec read(const EntityKey& key) = 0;
  virtual void ema_put(const EntityKey& key, std::span<const double> h, double beta) = 0;
  virtual CacheCounters counters() const = 0;
  // Non-null only for the in-process backend.
  virtual const CacheStore* local_store() const { return nullptr; }
  virtual CacheStore* mutable_local_store() { return nullptr; }
};

class InProcessCms final : public CmsBackend {
 public:
  InProcessCms(std::size_t dim, double beta,
               StoragePrecision precision = StoragePrecision::Single)
      : store_("cms", dim, beta, precision) {}

  std::size_t dim() const override { return store_.dim(); }
  Vec read(const EntityKey& key) override { return store_.read(key); }
  void ema_put(const EntityKey& key, std::span<const double> h, double beta) override {
    store_.ema_update(key, h, beta);
  }
  CacheCounters counters() const override { return store_.counters(); }
  const CacheStore* local_store() const override { return &store_; }
  CacheStore* mutable_local_store() override { return &store_; }

 private:
  CacheStore store_;
};

}  // namespace cs3
