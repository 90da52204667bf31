#include "mf/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace mf {

namespace {
std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}
}  // namespace

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError(str_cat("cannot open config '", path, "'"));
  std::stringstream ss;
  ss << is.rdbuf();
  return from_string(ss.str(), path);
}

KeyValueConfig KeyValueConfig::from_string(const std::string& text,
                                           const std::string& origin) {
  KeyValueConfig cfg;
  cfg.origin_ = origin;
  std::istringstream is(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError(str_cat(origin, ":", lineno,
                               ": expected `key = value`, got '", line, "'"));
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty())
      throw ParseError(str_cat(origin, ":", lineno, ": empty key"));
    if (cfg.kv_.count(key))
      throw ConfigError(str_cat(origin, ":", lineno, ": duplicate key '", key,
                                "'"));
    cfg.kv_[key] = val;
  }
  return cfg;
}

bool KeyValueConfig::has(const std::string& key) const {
  return kv_.count(key) > 0;
}

std::string KeyValueConfig::get_str(const std::string& key,
                                    const std::string& fallback) const {
  consumed_.insert(key);
  auto it = kv_.find(key);
  return it == kv_.end() ? fallback : it->second;
}

std::string KeyValueConfig::require_str(const std::string& key) const {
  consumed_.insert(key);
  auto it = kv_.find(key);
  if (it == kv_.end())
    throw ConfigError(str_cat(origin_, ": missing required key '", key, "'"));
  return it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  consumed_.insert(key);
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  char* end = nullptr;
  const double v = std::strtod(it->second.c_str(), &end);
  if (end == it->second.c_str() || *end != '\0')
    throw ConfigError(str_cat(origin_, ": key '", key, "': '", it->second,
                              "' is not a number"));
  return v;
}

int64_t KeyValueConfig::get_int(const std::string& key, int64_t fallback) const {
  consumed_.insert(key);
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  char* end = nullptr;
  const long long v = std::strtoll(it->second.c_str(), &end, 10);
  if (end == it->second.c_str() || *end != '\0')
    throw ConfigError(str_cat(origin_, ": key '", key, "': '", it->second,
                              "' is not an integer"));
  return v;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  consumed_.insert(key);
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  std::string v = it->second;
  std::transform(v.begin(), v.end(), v.begin(), ::tolower);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(str_cat(origin_, ": key '", key, "': '", it->second,
                            "' is not a boolean"));
}

std::vector<size_t> KeyValueConfig::get_size_list(
    const std::string& key, std::vector<size_t> fallback) const {
  consumed_.insert(key);
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  std::vector<size_t> out;
  std::istringstream is(it->second);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    tok = trim(tok);
    if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos)
      throw ConfigError(str_cat(origin_, ": key '", key, "': '", it->second,
                                "' is not a comma list of unsigned integers"));
    out.push_back(static_cast<size_t>(std::stoull(tok)));
  }
  if (out.empty())
    throw ConfigError(str_cat(origin_, ": key '", key, "': empty list"));
  return out;
}

void KeyValueConfig::check_all_consumed() const {
  std::vector<std::string> unknown;
  for (const auto& [k, v] : kv_)
    if (!consumed_.count(k)) unknown.push_back(k);
  if (!unknown.empty()) {
    std::string msg = str_cat(origin_, ": unknown config keys:");
    for (const auto& k : unknown) msg += " " + k;
    throw ConfigError(msg);
  }
}

}  // namespace mf
