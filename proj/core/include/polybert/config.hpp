#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace polybert::config {

/// Flat `key = value` configuration file. `#` starts a comment; keys are
/// unique; serialization is sorted so resolved configs diff cleanly.
class KvConfig {
 public:
  KvConfig() = default;

  static KvConfig load(const std::string& path);
  static KvConfig parse(const std::string& text);

  /// Applies `key=value` strings (CLI --set overrides) on top.
  void apply_override(const std::string& key_equals_value);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  void set(const std::string& key, const std::string& value);

  const std::map<std::string, std::string>& entries() const { return kv_; }
  std::string serialize() const;

  /// Keys present in the file but never read; used to reject typos.
  std::vector<std::string> unknown_keys(const std::vector<std::string>& known) const;

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace polybert::config
