#pragma once

// Experiment spec files: JSON, or a small TOML subset mapped onto the same
// JSON tree. The TOML subset covers [table] / [table.sub] headers, comments,
// and `key = value` with strings, integers, floats, booleans and flat arrays.

#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "dedsi/corpus.hpp"

namespace dedsi {

namespace detail {

inline std::string strip_toml_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

inline Json parse_toml_scalar(const std::string& raw, std::size_t lineno) {
  const std::string v = trim(raw);
  if (v.empty()) throw Error(concat("toml line ", lineno, ": missing value"));
  if (v.front() == '"') {
    if (v.size() < 2 || v.back() != '"') throw Error(concat("toml line ", lineno, ": unterminated string"));
    std::string out;
    for (std::size_t i = 1; i + 1 < v.size(); ++i) {
      if (v[i] == '\\' && i + 2 < v.size()) {
        const char e = v[++i];
        out.push_back(e == 'n' ? '\n' : e == 't' ? '\t' : e);
      } else {
        out.push_back(v[i]);
      }
    }
    return out;
  }
  if (v == "true") return true;
  if (v == "false") return false;
  std::string digits;
  for (char c : v)
    if (c != '_') digits.push_back(c);
  try {
    std::size_t used = 0;
    if (digits.find_first_of(".eE") == std::string::npos) {
      if (digits.front() == '-') {
        const long long x = std::stoll(digits, &used);
        if (used == digits.size()) return x;
      } else {
        const unsigned long long x = std::stoull(digits, &used);
        if (used == digits.size()) return x;
      }
    } else {
      const double x = std::stod(digits, &used);
      if (used == digits.size()) return x;
    }
  } catch (const std::exception&) {
  }
  throw Error(concat("toml line ", lineno, ": cannot parse value '", v, "'"));
}

inline Json parse_toml_value(const std::string& raw, std::size_t lineno) {
  const std::string v = trim(raw);
  if (v.empty() || v.front() != '[') return parse_toml_scalar(v, lineno);
  if (v.back() != ']') throw Error(concat("toml line ", lineno, ": unterminated array"));
  Json arr = Json::array();
  std::string item;
  bool in_string = false;
  for (std::size_t i = 1; i + 1 < v.size(); ++i) {
    const char c = v[i];
    if (c == '"') in_string = !in_string;
    if (c == ',' && !in_string) {
      if (!trim(item).empty()) arr.push_back(parse_toml_scalar(item, lineno));
      item.clear();
    } else {
      item.push_back(c);
    }
  }
  if (!trim(item).empty()) arr.push_back(parse_toml_scalar(item, lineno));
  return arr;
}

}  // namespace detail

inline Json parse_toml(std::istream& in) {
  Json root = Json::object();
  Json* table = &root;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = trim(detail::strip_toml_comment(line));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']' || s.size() < 3) throw Error(concat("toml line ", lineno, ": bad table header"));
      table = &root;
      std::stringstream path(s.substr(1, s.size() - 2));
      std::string part;
      while (std::getline(path, part, '.')) {
        part = trim(part);
        if (part.empty()) throw Error(concat("toml line ", lineno, ": empty table name"));
        Json& next = (*table)[part];
        if (next.is_null()) next = Json::object();
        if (!next.is_object()) throw Error(concat("toml line ", lineno, ": '", part, "' is not a table"));
        table = &next;
      }
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw Error(concat("toml line ", lineno, ": expected key = value"));
    std::string key = trim(s.substr(0, eq));
    if (key.size() >= 2 && key.front() == '"' && key.back() == '"') key = key.substr(1, key.size() - 2);
    if (key.empty()) throw Error(concat("toml line ", lineno, ": empty key"));
    if (table->contains(key)) throw Error(concat("toml line ", lineno, ": duplicate key '", key, "'"));
    (*table)[key] = detail::parse_toml_value(s.substr(eq + 1), lineno);
  }
  return root;
}

/// Reads a spec document; `.toml` files use the TOML subset, anything else JSON.
inline Json load_spec_document(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(concat("cannot read spec '", path.string(), "'"));
  if (path.extension() == ".toml") return parse_toml(in);
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw Error(concat(path.string(), ": ", e.what()));
  }
}

}  // namespace dedsi
