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

// Binary wire protocol of the embedding server.
//
// Every frame is `u32 length | body`, where length counts the body bytes.
// All integers and floats are little-endian.
//
// Request body:
//   u8 opcode | u8 namespace | u64 id                          GET, STATS, SHUTDOWN
//   u8 opcode | u8 namespace | u64 id | f32 beta | u32 dim | dim x f32   EMA_PUT
//
// Response body:
//   u8 status                                   OK (EMA_PUT, SHUTDOWN), MISS, ERR
//   u8 status | u32 dim | dim x f32             OK for GET
//   u8 status | u32 n | n x (u8 opcode | u64 count | f32 p50 | f32 p99 | f32 max)
//                                               OK for STATS, latencies in us

#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cs3/sync_caches.hpp"

namespace cs3::wire {

enum class Opcode : std::uint8_t { Get = 0x01, EmaPut = 0x02, Stats = 0x03, Shutdown = 0x04 };
enum class Status : std::uint8_t { Ok = 0x00, Miss = 0x01, Err = 0x02 };

inline constexpr std::uint32_t kMaxDim = 4096;
inline constexpr std::size_t kKeyHeaderBytes = 10;
inline constexpr std::size_t kPutHeaderBytes = kKeyHeaderBytes + 8;
inline constexpr std::uint32_t kMaxFrameBody =
    static_cast<std::uint32_t>(kPutHeaderBytes + 4 * kMaxDim);

inline const char* opcode_name(Opcode op) {
  switch (op) {
    case Opcode::Get:
      return "GET";
    case Opcode::EmaPut:
      return "EMA_PUT";
    case Opcode::Stats:
      return "STATS";
    case Opcode::Shutdown:
      return "SHUTDOWN";
  }
  return "?";
}

struct Request {
  Opcode op = Opcode::Get;
  EntityKey key;
  float beta = 0.0f;
  std::vector<float> payload;
};

struct OpStats {
  Opcode op = Opcode::Get;
  std::uint64_t count = 0;
  float p50_us = 0.0f;
  float p99_us = 0.0f;
  float max_us = 0.0f;
};

struct Response {
  Status status = Status::Ok;
  std::vector<float> payload;  // GET hits
  std::vector<OpStats> stats;  // STATS
};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void put_u64(std::vector<std::uint8_t>& b, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void put_f32(std::vector<std::uint8_t>& b, float v) {
  put_u32(b, std::bit_cast<std::uint32_t>(v));
}
inline std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}
inline std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}
inline float get_f32(const std::uint8_t* p) { return std::bit_cast<float>(get_u32(p)); }

// Replaces the placeholder length at the front of a frame.
inline void seal(std::vector<std::uint8_t>& frame) {
  const auto body = static_cast<std::uint32_t>(frame.size() - 4);
  for (int i = 0; i < 4; ++i) frame[i] = static_cast<std::uint8_t>(body >> (8 * i));
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_request(const Request& r) {
  std::vector<std::uint8_t> f(4, 0);
  f.push_back(static_cast<std::uint8_t>(r.op));
  f.push_back(static_cast<std::uint8_t>(r.key.ns));
  detail::put_u64(f, r.key.id);
  if (r.op == Opcode::EmaPut) {
    detail::put_f32(f, r.beta);
    detail::put_u32(f, static_cast<std::uint32_t>(r.payload.size()));
    for (float x : r.payload) detail::put_f32(f, x);
  }
  detail::seal(f);
  return f;
}

struct ParsedRequest {
  std::optional<Request> request;
  std::string error;
};

// Validates a request body (without the length prefix). `expected_dim` of 0
// accepts any dim up to kMaxDim.
inline ParsedRequest parse_request(std::span<const std::uint8_t> body,
                                   std::uint32_t expected_dim = 0) {
  ParsedRequest out;
  if (body.size() < kKeyHeaderBytes) {
    out.error = "frame shorter than request header";
    return out;
  }
  const std::uint8_t op = body[0];
  const std::uint8_t ns = body[1];
  if (op < 0x01 || op > 0x04) {
    out.error = "unknown opcode " + std::to_string(op);
    return out;
  }
  if (ns > 0x01) {
    out.error = "unknown namespace " + std::to_string(ns);
    return out;
  }
  Request r;
  r.op = static_cast<Opcode>(op);
  r.key = EntityKey{static_cast<Namespace>(ns), detail::get_u64(body.data() + 2)};
  if (r.op != Opcode::EmaPut) {
    if (body.size() != kKeyHeaderBytes) {
      out.error = std::string(opcode_name(r.op)) + " frame has trailing bytes";
      return out;
    }
    out.request = std::move(r);
    return out;
  }
  if (body.size() < kPutHeaderBytes) {
    out.error = "EMA_PUT frame shorter than its header";
    return out;
  }
  r.beta = detail::get_f32(body.data() + 10);
  const std::uint32_t dim = detail::get_u32(body.data() + 14);
  if (dim == 0 || dim > kMaxDim) {
    out.error = "EMA_PUT dim " + std::to_string(dim) + " outside [1, 4096]";
    return out;
  }
  if (body.size() != kPutHeaderBytes + 4ull * dim) {
    out.error = "EMA_PUT payload length does not match dim";
    return out;
  }
  if (expected_dim != 0 && dim != expected_dim) {
    out.error = "EMA_PUT dim " + std::to_string(dim) + " != server dim " +
                std::to_string(expected_dim);
    return out;
  }
  if (!std::isfinite(r.beta) || r.beta < 0.0f || r.beta > 1.0f) {
    out.error = "EMA_PUT beta outside [0,1]";
    return out;
  }
  r.payload.resize(dim);
  for (std::uint32_t i = 0; i < dim; ++i) {
    r.payload[i] = detail::get_f32(body.data() + kPutHeaderBytes + 4 * i);
    if (!std::isfinite(r.payload[i])) {
      out.error = "EMA_PUT payload has non-finite value";
      return out;
    }
  }
  out.request = std::move(r);
  return out;
}

inline std::vector<std::uint8_t> encode_status(Status s) {
  std::vector<std::uint8_t> f(4, 0);
  f.push_back(static_cast<std::uint8_t>(s));
  detail::seal(f);
  return f;
}

inline std::vector<std::uint8_t> encode_vector_response(std::span<const float> v) {
  std::vector<std::uint8_t> f(4, 0);
  f.reserve(4 + 5 + 4 * v.size());
  f.push_back(static_cast<std::uint8_t>(Status::Ok));
  detail::put_u32(f, static_cast<std::uint32_t>(v.size()));
  for (float x : v) detail::put_f32(f, x);
  detail::seal(f);
  return f;
}

inline std::vector<std::uint8_t> encode_stats_response(std::span<const OpStats> stats) {
  std::vector<std::uint8_t> f(4, 0);
  f.push_back(static_cast<std::uint8_t>(Status::Ok));
  detail::put_u32(f, static_cast<std::uint32_t>(stats.size()));
  for (const auto& s : stats) {
    f.push_back(static_cast<std::uint8_t>(s.op));
    detail::put_u64(f, s.count);
    detail::put_f32(f, s.p50_us);
    detail::put_f32(f, s.p99_us);
    detail::put_f32(f, s.max_us);
  }
  detail::seal(f);
  return f;
}

// Decodes a response body for a request of kind `op`. Returns nullopt when
// the body is malformed.
inline std::optional<Response> parse_response(std::span<const std::uint8_t> body, Opcode op) {
  if (body.empty() || body[0] > 0x02) return std::nullopt;
  Response r;
  r.status = static_cast<Status>(body[0]);
  if (r.status != Status::Ok || op == Opcode::EmaPut || op == Opcode::Shutdown) {
    if (body.size() != 1) return std::nullopt;
    return r;
  }
  if (body.size() < 5) return std::nullopt;
  const std::uint32_t n = detail::get_u32(body.data() + 1);
  if (op == Opcode::Get) {
    if (n > kMaxDim || body.size() != 5 + 4ull * n) return std::nullopt;
    r.payload.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) r.payload[i] = detail::get_f32(body.data() + 5 + 4 * i);
    return r;
  }
  constexpr std::size_t kEntry = 1 + 8 + 12;
  if (n > 16 || body.size() != 5 + kEntry * n) return std::nullopt;
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint8_t* p = body.data() + 5 + kEntry * i;
    OpStats s;
    s.op = static_cast<Opcode>(p[0]);
    s.count = detail::get_u64(p + 1);
    s.p50_us = detail::get_f32(p + 9);
    s.p99_us = detail::get_f32(p + 13);
    s.max_us = detail::get_f32(p + 17);
    r.stats.push_back(s);
  }
  return r;
}

}  // namespace cs3::wire
