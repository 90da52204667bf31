#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "mf/common.hpp"

namespace mf {

// Flat `key = value` text config. '#' starts a comment; blank lines are
// ignored. Every key must be consumed by a getter — check_all_consumed()
// rejects configs with unknown keys.
class KeyValueConfig {
 public:
  static KeyValueConfig load(const std::string& path);
  static KeyValueConfig from_string(const std::string& text,
                                    const std::string& origin = "<string>");

  bool has(const std::string& key) const;
  std::string get_str(const std::string& key, const std::string& fallback) const;
  std::string require_str(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  // comma-separated unsigned integers
  std::vector<size_t> get_size_list(const std::string& key,
                                    std::vector<size_t> fallback) const;

  // Raises ConfigError naming every key no getter ever touched.
  void check_all_consumed() const;

 private:
  std::string origin_;
  std::map<std::string, std::string> kv_;
  mutable std::set<std::string> consumed_;
};

}  // namespace mf
