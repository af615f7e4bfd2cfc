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

// Interaction events and the CSV stream format:
//
//   event_time,label_ready_time,user_id,item_id,label,
//   u_cat_<f>...,u_dense_<f>...,i_cat_<f>...,i_dense_<f>...
//
// Categorical columns hold unsigned 64-bit ids, dense columns reals.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <tuple>
#include <vector>

#include "cs3/features.hpp"

namespace cs3 {

struct InteractionEvent {
  std::uint64_t event_time = 0;
  std::uint64_t label_ready_time = 0;
  std::uint64_t user_id = 0;
  std::uint64_t item_id = 0;
  Features user;
  Features item;
  int label = 0;

  bool operator==(const InteractionEvent&) const = default;
};

// The total order that defines timesteps.
inline bool stream_before(const InteractionEvent& a, const InteractionEvent& b) {
  return std::tie(a.label_ready_time, a.event_time, a.user_id, a.item_id) <
         std::tie(b.label_ready_time, b.event_time, b.user_id, b.item_id);
}

inline void sort_stream(std::vector<InteractionEvent>& events) {
  std::stable_sort(events.begin(), events.end(), stream_before);
}

struct StreamSchema {
  std::vector<std::string> user_categorical;
  std::vector<std::string> user_dense;
  std::vector<std::string> item_categorical;
  std::vector<std::string> item_dense;
  bool operator==(const StreamSchema&) const = default;
};

class StreamFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

inline std::uint64_t parse_u64(std::string_view s, std::size_t line, const char* col) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw StreamFormatError("line " + std::to_string(line) + ": bad integer in column " + col);
  return v;
}

inline double parse_f64(std::string_view s, std::size_t line, const char* col) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v))
    throw StreamFormatError("line " + std::to_string(line) + ": bad real in column " + col);
  return v;
}

inline void append_double(std::string& out, double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, p);
}

inline void append_u64(std::string& out, std::uint64_t v) {
  char buf[24];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, p);
}

}  // namespace detail

inline StreamSchema parse_header(std::string_view header) {
  auto cols = detail::split_csv(header);
  static const char* kFixed[] = {"event_time", "label_ready_time", "user_id", "item_id", "label"};
  if (cols.size() < 5) throw StreamFormatError("header: expected at least 5 columns");
  for (int i = 0; i < 5; ++i)
    if (cols[i] != kFixed[i])
      throw StreamFormatError("header: column " + std::to_string(i) + " must be '" + kFixed[i] +
                              "', got '" + std::string(cols[i]) + "'");
  StreamSchema s;
  int stage = 0;  // columns must appear grouped in the documented order
  for (std::size_t i = 5; i < cols.size(); ++i) {
    const std::string_view c = cols[i];
    int group = -1;
    std::string_view name;
    for (auto [prefix, g] : {std::pair{"u_cat_", 0}, std::pair{"u_dense_", 1},
                             std::pair{"i_cat_", 2}, std::pair{"i_dense_", 3}}) {
      const std::string_view pre(prefix);
      if (c.substr(0, pre.size()) == pre) {
        group = g;
        name = c.substr(pre.size());
        break;
      }
    }
    if (group < 0 || name.empty())
      throw StreamFormatError("header: unrecognized column '" + std::string(c) + "'");
    if (group < stage)
      throw StreamFormatError("header: column '" + std::string(c) + "' out of order");
    stage = group;
    auto& dst = group == 0 ? s.user_categorical
                : group == 1 ? s.user_dense
                : group == 2 ? s.item_categorical
                             : s.item_dense;
    dst.emplace_back(name);
  }
  return s;
}

inline std::string format_header(const StreamSchema& s) {
  std::string h = "event_time,label_ready_time,user_id,item_id,label";
  for (const auto& n : s.user_categorical) h += ",u_cat_" + n;
  for (const auto& n : s.user_dense) h += ",u_dense_" + n;
  for (const auto& n : s.item_categorical) h += ",i_cat_" + n;
  for (const auto& n : s.item_dense) h += ",i_dense_" + n;
  return h;
}

struct Stream {
  StreamSchema schema;
  std::vector<InteractionEvent> events;
};

inline Stream parse_stream_csv(std::istream& in) {
  Stream out;
  std::string line;
  if (!std::getline(in, line)) throw StreamFormatError("empty stream file (no header)");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  out.schema = parse_header(line);
  const auto& sc = out.schema;
  const std::size_t ncols = 5 + sc.user_categorical.size() + sc.user_dense.size() +
                            sc.item_categorical.size() + sc.item_dense.size();
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = detail::split_csv(line);
    if (f.size() != ncols)
      throw StreamFormatError("line " + std::to_string(lineno) + ": expected " +
                              std::to_string(ncols) + " fields, got " + std::to_string(f.size()));
    InteractionEvent e;
    e.event_time = detail::parse_u64(f[0], lineno, "event_time");
    e.label_ready_time = detail::parse_u64(f[1], lineno, "label_ready_time");
    e.user_id = detail::parse_u64(f[2], lineno, "user_id");
    e.item_id = detail::parse_u64(f[3], lineno, "item_id");
    const std::uint64_t label = detail::parse_u64(f[4], lineno, "label");
    if (label > 1) throw StreamFormatError("line " + std::to_string(lineno) + ": label must be 0 or 1");
    e.label = static_cast<int>(label);
    if (e.label_ready_time < e.event_time)
      throw StreamFormatError("line " + std::to_string(lineno) +
                              ": label_ready_time precedes event_time");
    std::size_t c = 5;
    for (std::size_t i = 0; i < sc.user_categorical.size(); ++i)
      e.user.categorical.push_back(detail::parse_u64(f[c++], lineno, "u_cat"));
    for (std::size_t i = 0; i < sc.user_dense.size(); ++i)
      e.user.dense.push_back(detail::parse_f64(f[c++], lineno, "u_dense"));
    for (std::size_t i = 0; i < sc.item_categorical.size(); ++i)
      e.item.categorical.push_back(detail::parse_u64(f[c++], lineno, "i_cat"));
    for (std::size_t i = 0; i < sc.item_dense.size(); ++i)
      e.item.dense.push_back(detail::parse_f64(f[c++], lineno, "i_dense"));
    out.events.push_back(std::move(e));
  }
  return out;
}

inline Stream read_stream_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open stream file '" + path + "'");
  return parse_stream_csv(in);
}

inline void write_stream_csv(std::ostream& out, const Stream& s) {
  out << format_header(s.schema) << '\n';
  std::string line;
  for (const auto& e : s.events) {
    line.clear();
    detail::append_u64(line, e.event_time);
    line += ',';
    detail::append_u64(line, e.label_ready_time);
    line += ',';
    detail::append_u64(line, e.user_id);
    line += ',';
    detail::append_u64(line, e.item_id);
    line += ',';
    line += e.label ? '1' : '0';
    for (auto id : e.user.categorical) (line += ',', detail::append_u64(line, id));
    for (double x : e.user.dense) (line += ',', detail::append_double(line, x));
    for (auto id : e.item.categorical) (line += ',', detail::append_u64(line, id));
    for (double x : e.item.dense) (line += ',', detail::append_double(line, x));
    line += '\n';
    out << line;
  }
}

inline void write_stream_csv(const std::string& path, const Stream& s) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write stream file '" + path + "'");
  write_stream_csv(out, s);
  if (!out) throw std::runtime_error("failed writing stream file '" + path + "'");
}

}  // namespace cs3
