// Flat key=value run configuration: defaults, optional file, then command
// line overrides, snapshotted verbatim into every run directory.

#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace ktrace {

class KeyValueConfig {
 public:
  void set(const std::string& key, const std::string& value);
  // key=value, keys without a dot get prefixed with default_namespace.
  void set_pair(const std::string& pair, const std::string& default_namespace);
  void merge_file(const std::string& path);

  bool has(const std::string& key) const { return kv_.count(key) != 0; }
  std::string get_string(const std::string& key) const;  // throws when absent
  std::string get_string(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;

  std::string serialize() const;  // sorted key=value lines
  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace ktrace
