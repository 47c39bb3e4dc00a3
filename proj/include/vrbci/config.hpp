#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vrbci/wireless.hpp"

namespace vrbci {

// Configuration problems exit with code 1; runtime failures with code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

// Flat key-value configuration: `section.key = value` lines, '#' comments.
// Keys read by the harness are tracked so unknown (misspelled) keys can be
// reported after parsing.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return from_string(ss.str(), path);
  }

  static KeyValueConfig from_string(const std::string& text,
                                    const std::string& origin = "<string>") {
    KeyValueConfig cfg;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      std::string t = detail::trim(line);
      if (t.empty() || t[0] == '#') continue;
      std::size_t eq = t.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("config: " + origin + ":" + std::to_string(lineno) +
                          ": expected `key = value`");
      }
      std::string key = detail::trim(t.substr(0, eq));
      std::string value = detail::trim(t.substr(eq + 1));
      if (key.empty()) {
        throw ConfigError("config: " + origin + ":" + std::to_string(lineno) +
                          ": empty key");
      }
      cfg.values_[key] = value;
    }
    return cfg;
  }

  void set(const std::string& key, const std::string& value) {
    values_[key] = value;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& def) const {
    touch(key);
    auto it = values_.find(key);
    return it == values_.end() ? def : it->second;
  }

  double get_double(const std::string& key, double def) const {
    touch(key);
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    return parse_double(key, it->second);
  }

  // Power values accept a raw number (watts) or `<number> dBm`.
  double get_power_watts(const std::string& key, double def) const {
    touch(key);
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    std::string v = it->second;
    std::string lower = v;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    std::size_t pos = lower.rfind("dbm");
    if (pos != std::string::npos && pos + 3 == lower.size()) {
      double dbm = parse_double(key, detail::trim(v.substr(0, pos)));
      return dbm_to_watts(dbm);
    }
    return parse_double(key, v);
  }

  long long get_int(const std::string& key, long long def) const {
    touch(key);
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    long long out = 0;
    const std::string& s = it->second;
    auto r = std::from_chars(s.data(), s.data() + s.size(), out);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) {
      throw ConfigError("config: key " + key + " has non-integer value '" + s + "'");
    }
    return out;
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t def) const {
    touch(key);
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    std::uint64_t out = 0;
    const std::string& s = it->second;
    auto r = std::from_chars(s.data(), s.data() + s.size(), out);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) {
      throw ConfigError("config: key " + key + " has non-integer value '" + s + "'");
    }
    return out;
  }

  bool get_bool(const std::string& key, bool def) const {
    touch(key);
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError("config: key " + key + " expects true/false, got '" +
                      it->second + "'");
  }

  std::vector<double> get_double_list(const std::string& key,
                                      std::vector<double> def) const {
    touch(key);
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    std::vector<double> out;
    std::string cur;
    std::istringstream is(it->second);
    while (std::getline(is, cur, ',')) {
      out.push_back(parse_double(key, detail::trim(cur)));
    }
    if (out.empty()) {
      throw ConfigError("config: key " + key + " has an empty list");
    }
    return out;
  }

  // Keys present in the file but never read by the harness.
  std::vector<std::string> unknown_keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) {
      if (touched_.count(k) == 0) out.push_back(k);
    }
    return out;
  }

  const std::map<std::string, std::string>& raw() const { return values_; }

 private:
  void touch(const std::string& key) const { touched_.insert(key); }

  double parse_double(const std::string& key, const std::string& s) const {
    double out = 0.0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), out);
    if (s.empty() || r.ec != std::errc{} || r.ptr != s.data() + s.size()) {
      throw ConfigError("config: key " + key + " has non-numeric value '" + s + "'");
    }
    return out;
  }

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> touched_;
};

}  // namespace vrbci
