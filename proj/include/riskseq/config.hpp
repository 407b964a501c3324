#pragma once
#include <charconv>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "riskseq/csv.hpp"
#include "riskseq/errors.hpp"

namespace riskseq {

// Flat INI-style config:
//   [section]
//   key = value          # comment
//   list = 1, 2, 3
// Keys are looked up as "section.key". Unknown keys are tolerated (callers
// read what they need); malformed lines are a ConfigError.
class Config {
 public:
  Config() = default;

  static Config parse(const std::string& text) {
    Config cfg;
    cfg.hash_ = fnv1a(text);
    std::string section;
    size_t line_no = 0;
    size_t pos = 0;
    while (pos <= text.size()) {
      size_t eol = text.find('\n', pos);
      if (eol == std::string::npos) eol = text.size();
      std::string line = text.substr(pos, eol - pos);
      pos = eol + 1;
      ++line_no;
      const size_t hash_pos = line.find('#');
      if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']')
          throw ConfigError("config line " + std::to_string(line_no) + ": unterminated section");
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      const size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
      std::string key = trim(line.substr(0, eq));
      std::string value = trim(line.substr(eq + 1));
      if (key.empty())
        throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
      cfg.values_[section.empty() ? key : section + "." + key] = value;
    }
    return cfg;
  }

  static Config load(const std::string& path) { return parse(read_text_file(path)); }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_str(const std::string& key, const std::string& def) const {
    auto it = values_.find(key);
    return it == values_.end() ? def : it->second;
  }

  std::string require_str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing config key: " + key);
    return it->second;
  }

  int64_t get_int(const std::string& key, int64_t def) const {
    auto it = values_.find(key);
    return it == values_.end() ? def : to_int(it->second, key);
  }

  double get_double(const std::string& key, double def) const {
    auto it = values_.find(key);
    return it == values_.end() ? def : to_double(it->second, key);
  }

  bool get_bool(const std::string& key, bool def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError("config key " + key + ": expected true/false, got '" + it->second + "'");
  }

  std::vector<int64_t> get_int_list(const std::string& key, std::vector<int64_t> def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    std::vector<int64_t> out;
    for (const auto& tok : split_list(it->second)) out.push_back(to_int(tok, key));
    return out;
  }

  std::vector<double> get_double_list(const std::string& key, std::vector<double> def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    std::vector<double> out;
    for (const auto& tok : split_list(it->second)) out.push_back(to_double(tok, key));
    return out;
  }

  // FNV-1a hash of the raw config text; recorded in run manifests.
  uint64_t content_hash() const { return hash_; }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

 private:
  static std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return s.substr(b, e - b);
  }

  static std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
      if (c == ',') { out.push_back(trim(cur)); cur.clear(); }
      else cur += c;
    }
    cur = trim(cur);
    if (!cur.empty() || !out.empty()) out.push_back(cur);
    return out;
  }

  static int64_t to_int(const std::string& s, const std::string& key) {
    int64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
      throw ConfigError("config key " + key + ": expected integer, got '" + s + "'");
    return v;
  }

  static double to_double(const std::string& s, const std::string& key) {
    double v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
      throw ConfigError("config key " + key + ": expected number, got '" + s + "'");
    return v;
  }

  static uint64_t fnv1a(const std::string& text) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

  std::map<std::string, std::string> values_;
  uint64_t hash_ = 0;
};

} // namespace riskseq
