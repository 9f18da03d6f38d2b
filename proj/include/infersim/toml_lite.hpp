/* Copyright 2026 The InferSim Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Strict subset of TOML, enough for the bundled config files: [table]
// headers (dotted), key = value with integers, floats, booleans, basic
// strings and flat arrays, and # comments. Values are stored under their
// dotted path.

#include <cctype>
#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "infersim/errors.hpp"

namespace infersim::toml {

struct Value {
  std::variant<std::int64_t, double, bool, std::string,
               std::vector<double>, std::vector<std::string>>
      data;

  bool is_number() const {
    return std::holds_alternative<std::int64_t>(data) ||
           std::holds_alternative<double>(data);
  }
  double as_double() const {
    if (auto* i = std::get_if<std::int64_t>(&data))
      return static_cast<double>(*i);
    if (auto* d = std::get_if<double>(&data)) return *d;
    throw ConfigError("TOML value is not a number");
  }
  std::int64_t as_int() const {
    if (auto* i = std::get_if<std::int64_t>(&data)) return *i;
    if (auto* d = std::get_if<double>(&data))
      return static_cast<std::int64_t>(*d);
    throw ConfigError("TOML value is not a number");
  }
  const std::string& as_string() const {
    if (auto* s = std::get_if<std::string>(&data)) return *s;
    throw ConfigError("TOML value is not a string");
  }
  bool as_bool() const {
    if (auto* b = std::get_if<bool>(&data)) return *b;
    throw ConfigError("TOML value is not a boolean");
  }
  const std::vector<double>& as_number_array() const {
    if (auto* a = std::get_if<std::vector<double>>(&data)) return *a;
    throw ConfigError("TOML value is not a number array");
  }
};

class Table {
 public:
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  const Value& at(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end())
      throw ConfigError("missing config key '" + key + "'");
    return it->second;
  }

  double get_double(const std::string& key) const { return at(key).as_double(); }
  std::int64_t get_int(const std::string& key) const { return at(key).as_int(); }
  std::string get_string(const std::string& key) const {
    return at(key).as_string();
  }
  double get_double_or(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
  }
  std::int64_t get_int_or(const std::string& key, std::int64_t fallback) const {
    return has(key) ? get_int(key) : fallback;
  }
  std::string get_string_or(const std::string& key,
                            const std::string& fallback) const {
    return has(key) ? get_string(key) : fallback;
  }

  void set(const std::string& key, Value v) { values_[key] = std::move(v); }

  const std::map<std::string, Value>& entries() const { return values_; }

 private:
  std::map<std::string, Value> values_;
};

namespace detail {

inline std::string strip(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

// Cuts a trailing comment that is not inside a string literal.
inline std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

inline Value parse_scalar(const std::string& text, int line_no) {
  const std::string t = strip(text);
  if (t.empty()) throw ConfigError("empty value at line " +
                                   std::to_string(line_no));
  if (t == "true") return Value{true};
  if (t == "false") return Value{false};
  if (t.front() == '"') {
    if (t.size() < 2 || t.back() != '"')
      throw ConfigError("unterminated string at line " +
                        std::to_string(line_no));
    return Value{t.substr(1, t.size() - 2)};
  }
  // Number: integer when it round-trips without '.', 'e' or overflow.
  try {
    std::size_t used = 0;
    if (t.find('.') == std::string::npos &&
        t.find('e') == std::string::npos &&
        t.find('E') == std::string::npos) {
      const std::int64_t i = std::stoll(t, &used);
      if (used == t.size()) return Value{i};
    }
    const double d = std::stod(t, &used);
    if (used == t.size()) return Value{d};
  } catch (const std::exception&) {
  }
  throw ConfigError("cannot parse value '" + t + "' at line " +
                    std::to_string(line_no));
}

inline Value parse_array(const std::string& text, int line_no) {
  const std::string inner = strip(text.substr(1, text.size() - 2));
  std::vector<std::string> items;
  std::string cur;
  bool in_string = false;
  for (char c : inner) {
    if (c == '"') in_string = !in_string;
    if (c == ',' && !in_string) {
      items.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!strip(cur).empty()) items.push_back(cur);
  if (items.empty()) return Value{std::vector<double>{}};
  if (strip(items[0]).front() == '"') {
    std::vector<std::string> out;
    for (const auto& item : items)
      out.push_back(parse_scalar(item, line_no).as_string());
    return Value{out};
  }
  std::vector<double> out;
  for (const auto& item : items)
    out.push_back(parse_scalar(item, line_no).as_double());
  return Value{out};
}

}  // namespace detail

inline Table parse(const std::string& text) {
  Table table;
  std::string section;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string line = text.substr(
        pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    line = detail::strip(detail::strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("bad table header at line " +
                          std::to_string(line_no));
      section = detail::strip(line.substr(1, line.size() - 2));
      if (section.empty())
        throw ConfigError("empty table header at line " +
                          std::to_string(line_no));
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("expected key = value at line " +
                        std::to_string(line_no));
    const std::string key = detail::strip(line.substr(0, eq));
    const std::string value = detail::strip(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("empty key at line " + std::to_string(line_no));
    const std::string full = section.empty() ? key : section + "." + key;
    if (!value.empty() && value.front() == '[' && value.back() == ']')
      table.set(full, detail::parse_array(value, line_no));
    else
      table.set(full, detail::parse_scalar(value, line_no));
  }
  return table;
}

}  // namespace infersim::toml
