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

// Canonical binary snapshot of full training state.
//
//   "CS3S" | u32 version | { u32 tag | u64 length | payload }*
//
// All integers are little-endian. Sections appear in a fixed order: META,
// DENSE blocks in declaration order, SPARSE tables, CACHE stores, RNG.
// Parameter and optimizer payloads are f64 so a resumed run continues
// bit-exactly; single-precision caches are stored as f32, matching how they
// are kept at rest.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cs3/nn_core.hpp"
#include "cs3/param_server.hpp"
#include "cs3/sync_caches.hpp"

namespace cs3 {

inline constexpr std::uint32_t kSnapshotVersion = 1;
inline constexpr char kSnapshotMagic[4] = {'C', 'S', '3', 'S'};

enum class SnapshotTag : std::uint32_t {
  Meta = 1,
  Dense = 2,
  Sparse = 3,
  Cache = 4,
  Rng = 5,
};

class SnapshotError : public std::runtime_error {
 public:
  SnapshotError(const std::string& msg, std::size_t offset)
      : std::runtime_error(msg + " (at offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void f64s(std::span<const double> v) {
    for (double x : v) f64(x);
  }

  std::size_t size() const { return buf_.size(); }
  std::vector<std::uint8_t>& buffer() { return buf_; }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

  // Patches a previously reserved u64 at `pos`.
  void patch_u64(std::size_t pos, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_[pos + i] = static_cast<std::uint8_t>(v >> (8 * i));
  }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> data, std::size_t base = 0)
      : data_(data), base_(base) {}

  std::size_t offset() const { return base_ + pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return pos_ == data_.size(); }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n)
      throw SnapshotError(std::string("truncated while reading ") + what + ": need " +
                              std::to_string(n) + " bytes, have " +
                              std::to_string(remaining()),
                          offset());
  }
  std::uint8_t u8(const char* what = "u8") {
    need(1, what);
    return data_[pos_++];
  }
  std::uint32_t u32(const char* what = "u32") {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what = "u64") {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32(const char* what = "f32") { return std::bit_cast<float>(u32(what)); }
  double f64(const char* what = "f64") { return std::bit_cast<double>(u64(what)); }
  std::string str(const char* what = "string") {
    const std::uint32_t n = u32(what);
    need(n, what);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  Vec f64s(std::size_t n, const char* what) {
    need(n * 8, what);
    Vec v(n);
    for (auto& x : v) x = f64(what);
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t base_ = 0;
  std::size_t pos_ = 0;
};

struct DenseBlock {
  std::string name;
  DenseParams params;
  OptimizerState opt;
  bool operator==(const DenseBlock&) const = default;
};

struct ModelSnapshot {
  std::uint32_t version = kSnapshotVersion;
  std::uint64_t global_step = 0;
  std::uint64_t seed = 0;
  std::uint64_t skipped_events = 0;
  std::vector<DenseBlock> dense;
  std::vector<SparseTable> sparse;
  std::vector<CacheStore> caches;
  // All randomness during training is counter-based on (seed, field, slot),
  // so the generator state is the seed plus a draw counter.
  std::uint64_t rng_seed = 0;
  std::uint64_t rng_draws = 0;

  bool operator==(const ModelSnapshot&) const = default;
};

namespace detail {

inline void write_moments(ByteWriter& w, const MomentState& m) {
  w.u64(m.step);
  const bool has = !m.m.empty();
  w.u8(has ? 1 : 0);
  if (has) {
    w.f64s(m.m);
    w.f64s(m.v);
  }
}

inline MomentState read_moments(ByteReader& r, std::size_t n) {
  MomentState m;
  m.step = r.u64("moment step");
  const std::uint8_t has = r.u8("moment flag");
  if (has > 1) throw SnapshotError("invalid moment flag", r.offset() - 1);
  if (has) {
    m.m = r.f64s(n, "first moments");
    m.v = r.f64s(n, "second moments");
  }
  return m;
}

template <typename Fn>
void write_section(ByteWriter& w, SnapshotTag tag, Fn&& body) {
  w.u32(static_cast<std::uint32_t>(tag));
  const std::size_t len_pos = w.size();
  w.u64(0);
  const std::size_t start = w.size();
  body(w);
  w.patch_u64(len_pos, w.size() - start);
}

inline void write_dense(ByteWriter& w, const DenseBlock& b) {
  w.str(b.name);
  w.u32(static_cast<std::uint32_t>(b.params.out_dim()));
  w.u32(static_cast<std::uint32_t>(b.params.in_dim()));
  w.f64s(b.params.weights.data);
  w.f64s(b.params.bias);
  write_moments(w, b.opt.weights);
  write_moments(w, b.opt.bias);
}

inline DenseBlock read_dense(ByteReader& r) {
  DenseBlock b;
  b.name = r.str("dense name");
  const std::uint32_t rows = r.u32("dense rows");
  const std::uint32_t cols = r.u32("dense cols");
  const std::size_t n = static_cast<std::size_t>(rows) * cols;
  r.need(n * 8, "dense weights");
  b.params.weights = Matrix(rows, cols);
  b.params.weights.data = r.f64s(n, "dense weights");
  b.params.bias = r.f64s(rows, "dense bias");
  b.opt.weights = read_moments(r, n);
  b.opt.bias = read_moments(r, rows);
  if (!all_finite(b.params.weights.data) || !all_finite(b.params.bias))
    throw SnapshotError("dense block '" + b.name + "' has non-finite entries", r.offset());
  return b;
}

inline void write_sparse(ByteWriter& w, const SparseTable& t) {
  w.str(t.field());
  w.u32(static_cast<std::uint32_t>(t.dim()));
  w.u64(t.modulus());
  w.u64(t.seed());
  w.f64(t.init_scale());
  const auto rows = t.sorted_rows();
  w.u64(rows.size());
  for (const auto& [slot, row] : rows) {
    w.u64(slot);
    w.f64s(row->value);
    write_moments(w, row->moments);
  }
}

inline SparseTable read_sparse(ByteReader& r) {
  const std::size_t at = r.offset();
  std::string field = r.str("sparse field");
  const std::uint32_t dim = r.u32("sparse dim");
  const std::uint64_t modulus = r.u64("sparse modulus");
  const std::uint64_t seed = r.u64("sparse seed");
  const double scale = r.f64("sparse init scale");
  if (dim == 0 || modulus == 0)
    throw SnapshotError("sparse table '" + field + "' has invalid shape", at);
  SparseTable t(field, dim, modulus, seed, scale);
  const std::uint64_t n = r.u64("sparse row count");
  std::uint64_t prev = 0;
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::size_t row_at = r.offset();
    const std::uint64_t slot = r.u64("sparse slot");
    if (slot >= modulus || (i > 0 && slot <= prev))
      throw SnapshotError("sparse table '" + field + "': slot out of range or unsorted", row_at);
    prev = slot;
    SparseRow row;
    row.value = r.f64s(dim, "sparse row");
    row.moments = read_moments(r, dim);
    if (!all_finite(row.value))
      throw SnapshotError("sparse table '" + field + "': non-finite row", row_at);
    t.insert_row(slot, std::move(row));
  }
  return t;
}

inline void write_cache(ByteWriter& w, const CacheStore& c) {
  w.str(c.name());
  w.u32(static_cast<std::uint32_t>(c.dim()));
  w.f64(c.decay());
  w.u8(static_cast<std::uint8_t>(c.precision()));
  const auto entries = c.sorted_entries();
  w.u64(entries.size());
  for (const auto& [key, vec] : entries) {
    w.u8(static_cast<std::uint8_t>(key.ns));
    w.u64(key.id);
    w.u32(static_cast<std::uint32_t>(vec->size()));
    if (c.precision() == StoragePrecision::Single) {
      for (double x : *vec) w.f32(static_cast<float>(x));
    } else {
      w.f64s(*vec);
    }
  }
}

inline CacheStore read_cache(ByteReader& r) {
  const std::size_t at = r.offset();
  std::string name = r.str("cache name");
  const std::uint32_t dim = r.u32("cache dim");
  const double decay = r.f64("cache decay");
  const std::uint8_t prec = r.u8("cache precision");
  if (dim == 0 || !(decay >= 0.0 && decay <= 1.0) || prec > 1)
    throw SnapshotError("cache '" + name + "' has invalid header", at);
  CacheStore c(name, dim, decay, static_cast<StoragePrecision>(prec));
  const std::uint64_t n = r.u64("cache entry count");
  EntityKey prev{};
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::size_t entry_at = r.offset();
    const std::uint8_t ns = r.u8("cache namespace");
    if (ns > 1) throw SnapshotError("cache '" + name + "': bad namespace", entry_at);
    EntityKey key{static_cast<Namespace>(ns), r.u64("cache id")};
    if (i > 0 && !(prev < key))
      throw SnapshotError("cache '" + name + "': keys not sorted", entry_at);
    prev = key;
    const std::uint32_t d = r.u32("cache entry dim");
    if (d != dim) throw SnapshotError("cache '" + name + "': entry dim mismatch", entry_at);
    Vec v(dim);
    if (c.precision() == StoragePrecision::Single) {
      r.need(static_cast<std::size_t>(dim) * 4, "cache payload");
      for (auto& x : v) x = r.f32("cache payload");
    } else {
      v = r.f64s(dim, "cache payload");
    }
    if (!all_finite(v)) throw SnapshotError("cache '" + name + "': non-finite entry", entry_at);
    c.insert(key, std::move(v));
  }
  return c;
}

}  // namespace detail

inline std::vector<std::uint8_t> snapshot_export(const ModelSnapshot& s) {
  ByteWriter w;
  for (char ch : kSnapshotMagic) w.u8(static_cast<std::uint8_t>(ch));
  w.u32(s.version);
  detail::write_section(w, SnapshotTag::Meta, [&](ByteWriter& b) {
    b.u64(s.global_step);
    b.u64(s.seed);
    b.u64(s.skipped_events);
  });
  for (const auto& d : s.dense)
    detail::write_section(w, SnapshotTag::Dense, [&](ByteWriter& b) { detail::write_dense(b, d); });
  for (const auto& t : s.sparse)
    detail::write_section(w, SnapshotTag::Sparse, [&](ByteWriter& b) { detail::write_sparse(b, t); });
  for (const auto& c : s.caches)
    detail::write_section(w, SnapshotTag::Cache, [&](ByteWriter& b) { detail::write_cache(b, c); });
  detail::write_section(w, SnapshotTag::Rng, [&](ByteWriter& b) {
    b.u64(s.rng_seed);
    b.u64(s.rng_draws);
  });
  return w.take();
}

inline ModelSnapshot snapshot_import(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), kSnapshotMagic, 4) != 0)
    throw SnapshotError("bad magic, not a snapshot", 0);
  ModelSnapshot s;
  s.version = r.u32("version");
  if (s.version != kSnapshotVersion)
    throw SnapshotError("unsupported snapshot version " + std::to_string(s.version) +
                            " (expected " + std::to_string(kSnapshotVersion) + ")",
                        4);
  bool saw_meta = false, saw_rng = false;
  int last_tag = 0;
  while (!r.done()) {
    const std::size_t section_at = r.offset();
    const std::uint32_t tag = r.u32("section tag");
    const std::uint64_t len = r.u64("section length");
    auto payload = r.take(static_cast<std::size_t>(len), "section payload");
    ByteReader body(payload, section_at + 12);
    if (static_cast<int>(tag) < last_tag)
      throw SnapshotError("sections out of canonical order", section_at);
    last_tag = static_cast<int>(tag);
    switch (static_cast<SnapshotTag>(tag)) {
      case SnapshotTag::Meta:
        if (saw_meta) throw SnapshotError("duplicate META section", section_at);
        saw_meta = true;
        s.global_step = body.u64("global step");
        s.seed = body.u64("seed");
        s.skipped_events = body.u64("skipped events");
        break;
      case SnapshotTag::Dense:
        s.dense.push_back(detail::read_dense(body));
        break;
      case SnapshotTag::Sparse:
        s.sparse.push_back(detail::read_sparse(body));
        break;
      case SnapshotTag::Cache:
        s.caches.push_back(detail::read_cache(body));
        break;
      case SnapshotTag::Rng:
        if (saw_rng) throw SnapshotError("duplicate RNG section", section_at);
        saw_rng = true;
        s.rng_seed = body.u64("rng seed");
        s.rng_draws = body.u64("rng draws");
        break;
      default:
        throw SnapshotError("unknown section tag " + std::to_string(tag), section_at);
    }
    if (!body.done())
      throw SnapshotError("section has " + std::to_string(body.remaining()) + " trailing bytes",
                          body.offset());
  }
  if (!saw_meta) throw SnapshotError("missing META section", r.offset());
  if (!saw_rng) throw SnapshotError("missing RNG section", r.offset());
  return s;
}

inline void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
}

}  // namespace cs3
