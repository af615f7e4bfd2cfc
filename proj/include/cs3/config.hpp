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

// Sectioned, typed key-value config files.
//
//   file    := { line }
//   line    := blank | comment | section | entry
//   comment := '#' ... end of line
//   section := '[' name ']'            name: [A-Za-z0-9_.]+
//   entry   := key '=' value           key: [A-Za-z0-9_]+
//   value   := scalar | '[' [ scalar { ',' scalar } ] ']'
//   scalar  := integer | real | 'true' | 'false' | '"' chars '"' | bare word
//
// Entries before the first section header belong to the section "".
// Every key is addressed as "section.key". Reading a key with the wrong type,
// repeating a key, or leaving a key unread are errors that name the field.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace cs3 {

class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& field, const std::string& msg)
      : std::invalid_argument(field.empty() ? msg : field + ": " + msg), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class ConfigFile {
 public:
  struct Entry {
    std::string raw;
    std::vector<std::string> items;  // set for list values
    bool is_list = false;
    bool quoted = false;
    std::size_t line = 0;
    mutable bool used = false;
  };

  static ConfigFile parse(std::string_view text) {
    ConfigFile cfg;
    std::string section;
    std::size_t lineno = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      std::size_t end = text.find('\n', pos);
      if (end == std::string_view::npos) end = text.size();
      std::string_view line = text.substr(pos, end - pos);
      pos = end + 1;
      ++lineno;
      line = strip_comment(line);
      line = trim(line);
      if (line.empty()) {
        if (end == text.size()) break;
        continue;
      }
      const std::string where = "line " + std::to_string(lineno);
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError(where, "unterminated section header");
        section = std::string(trim(line.substr(1, line.size() - 2)));
        if (section.empty() || !valid_name(section, true))
          throw ConfigError(where, "bad section name '" + section + "'");
        cfg.sections_.push_back(section);
      } else {
        const std::size_t eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError(where, "expected key = value");
        const std::string key(trim(line.substr(0, eq)));
        if (key.empty() || !valid_name(key, false))
          throw ConfigError(where, "bad key '" + key + "'");
        const std::string full = section.empty() ? key : section + "." + key;
        if (cfg.entries_.count(full)) throw ConfigError(full, "duplicate key at " + where);
        cfg.entries_.emplace(full, parse_value(trim(line.substr(eq + 1)), full, lineno));
      }
      if (end == text.size()) break;
    }
    return cfg;
  }

  static ConfigFile load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("", "cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  std::optional<std::string> get_string(const std::string& key) const {
    const Entry* e = find(key);
    if (!e) return std::nullopt;
    if (e->is_list) throw ConfigError(key, "expected a string, got a list");
    return e->raw;
  }

  std::optional<std::int64_t> get_int(const std::string& key) const {
    const Entry* e = scalar(key, "an integer");
    if (!e) return std::nullopt;
    return to_int(e->raw, key);
  }

  std::optional<std::uint64_t> get_uint(const std::string& key) const {
    const Entry* e = scalar(key, "a non-negative integer");
    if (!e) return std::nullopt;
    return to_uint(e->raw, key);
  }

  std::optional<double> get_real(const std::string& key) const {
    const Entry* e = scalar(key, "a real number");
    if (!e) return std::nullopt;
    return to_real(e->raw, key);
  }

  std::optional<bool> get_bool(const std::string& key) const {
    const Entry* e = scalar(key, "a boolean");
    if (!e) return std::nullopt;
    return to_bool(e->raw, key);
  }

  std::optional<std::vector<std::uint64_t>> get_uint_list(const std::string& key) const {
    const Entry* e = list(key);
    if (!e) return std::nullopt;
    std::vector<std::uint64_t> out;
    for (const auto& s : e->items) out.push_back(to_uint(s, key));
    return out;
  }

  std::optional<std::vector<bool>> get_bool_list(const std::string& key) const {
    const Entry* e = list(key);
    if (!e) return std::nullopt;
    std::vector<bool> out;
    for (const auto& s : e->items) out.push_back(to_bool(s, key));
    return out;
  }

  // Throws for the first key nobody read, so typos do not pass silently.
  void reject_unused() const {
    for (const auto& [k, e] : entries_)
      if (!e.used) throw ConfigError(k, "unknown key (line " + std::to_string(e.line) + ")");
  }

 private:
  static std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
      s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
      s.remove_suffix(1);
    return s;
  }

  static std::string_view strip_comment(std::string_view s) {
    bool in_quote = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '"') in_quote = !in_quote;
      if (s[i] == '#' && !in_quote) return s.substr(0, i);
    }
    return s;
  }

  static bool valid_name(std::string_view s, bool allow_dot) {
    for (char c : s) {
      const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                      c == '_' || (allow_dot && c == '.');
      if (!ok) return false;
    }
    return true;
  }

  static std::string unquote(std::string_view s, const std::string& key, bool* quoted) {
    *quoted = false;
    if (!s.empty() && s.front() == '"') {
      if (s.size() < 2 || s.back() != '"') throw ConfigError(key, "unterminated string");
      *quoted = true;
      return std::string(s.substr(1, s.size() - 2));
    }
    return std::string(s);
  }

  static Entry parse_value(std::string_view v, const std::string& key, std::size_t line) {
    Entry e;
    e.line = line;
    if (v.empty()) throw ConfigError(key, "missing value");
    if (v.front() == '[') {
      if (v.back() != ']') throw ConfigError(key, "unterminated list");
      e.is_list = true;
      std::string_view body = trim(v.substr(1, v.size() - 2));
      while (!body.empty()) {
        const std::size_t comma = body.find(',');
        const std::string_view item = trim(body.substr(0, comma));
        if (item.empty()) throw ConfigError(key, "empty list element");
        bool q = false;
        e.items.push_back(unquote(item, key, &q));
        if (comma == std::string_view::npos) break;
        body = body.substr(comma + 1);
        if (trim(body).empty()) throw ConfigError(key, "trailing comma in list");
      }
      e.raw = std::string(v);
      return e;
    }
    e.raw = unquote(v, key, &e.quoted);
    return e;
  }

  const Entry* find(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return nullptr;
    it->second.used = true;
    return &it->second;
  }

  const Entry* scalar(const std::string& key, const char* what) const {
    const Entry* e = find(key);
    if (e && (e->is_list || e->quoted))
      throw ConfigError(key, std::string("expected ") + what + ", got '" + e->raw + "'");
    return e;
  }

  const Entry* list(const std::string& key) const {
    const Entry* e = find(key);
    if (e && !e->is_list) throw ConfigError(key, "expected a list, got '" + e->raw + "'");
    return e;
  }

  static std::int64_t to_int(const std::string& s, const std::string& key) {
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
      throw ConfigError(key, "expected an integer, got '" + s + "'");
    return v;
  }

  static std::uint64_t to_uint(const std::string& s, const std::string& key) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
      throw ConfigError(key, "expected a non-negative integer, got '" + s + "'");
    return v;
  }

  static double to_real(const std::string& s, const std::string& key) {
    double v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
      throw ConfigError(key, "expected a real number, got '" + s + "'");
    return v;
  }

  static bool to_bool(const std::string& s, const std::string& key) {
    if (s == "true") return true;
    if (s == "false") return false;
    throw ConfigError(key, "expected true or false, got '" + s + "'");
  }

  std::map<std::string, Entry> entries_;
  std::vector<std::string> sections_;
};

}  // namespace cs3
