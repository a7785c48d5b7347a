#pragma once

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "stsa/errors.hpp"

namespace stsa {

// Flat key=value configuration with dotted keys (problem.kind, schedule.a0,
// run.K). '#' starts a comment. Every key can be overridden by a same-named
// --key value (or --key=value) command-line flag.
class KeyValueConfig {
 public:
  static KeyValueConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file: " + path);
    KeyValueConfig cfg;
    std::string line;
    while (std::getline(in, line)) cfg.apply_line(line);
    return cfg;
  }

  void apply_line(std::string line) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r\n") != std::string::npos)
        throw config_error("malformed config line: " + line);
      return;
    }
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }

  // Consumes --key value / --key=value pairs.
  void apply_overrides(const std::vector<std::string>& args) {
    for (size_t i = 0; i < args.size(); ++i) {
      const std::string& a = args[i];
      if (a.rfind("--", 0) != 0) throw config_error("expected --key overrides, got: " + a);
      const auto eq = a.find('=');
      if (eq != std::string::npos) {
        set(a.substr(2, eq - 2), a.substr(eq + 1));
      } else {
        if (i + 1 >= args.size()) throw config_error("missing value for flag " + a);
        set(a.substr(2), args[++i]);
      }
    }
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  std::string require_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw config_error("missing required config key: " + key);
    return it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return parse_double(key, it->second);
  }

  long get_long(const std::string& key, long fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      return std::stol(it->second);
    } catch (...) {
      throw config_error("key " + key + ": not an integer: " + it->second);
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::string v = it->second;
    std::transform(v.begin(), v.end(), v.begin(), ::tolower);
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw config_error("key " + key + ": not a boolean: " + it->second);
  }

  std::vector<double> get_double_list(const std::string& key) const {
    std::vector<double> out;
    auto it = values_.find(key);
    if (it == values_.end()) return out;
    std::stringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(parse_double(key, trim(tok)));
    return out;
  }

  std::vector<long> get_long_list(const std::string& key) const {
    std::vector<long> out;
    for (double v : get_double_list(key)) out.push_back(static_cast<long>(v));
    return out;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  static double parse_double(const std::string& key, const std::string& v) {
    try {
      size_t pos = 0;
      const double d = std::stod(v, &pos);
      if (pos != v.size()) throw config_error("");
      return d;
    } catch (...) {
      throw config_error("key " + key + ": not a number: " + v);
    }
  }

  std::map<std::string, std::string> values_;
};

}  // namespace stsa
