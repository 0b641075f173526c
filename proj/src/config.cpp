#include "ktrace/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ktrace {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const char* want) {
  throw std::runtime_error("config key '" + key + "' holds '" + value + "', expected " + want);
}

}  // namespace

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  if (key.empty()) throw std::runtime_error("empty config key");
  kv_[key] = value;
}

void KeyValueConfig::set_pair(const std::string& pair, const std::string& default_namespace) {
  const auto eq = pair.find('=');
  if (eq == std::string::npos || eq == 0)
    throw std::runtime_error("override '" + pair + "' is not key=value");
  std::string key = trim(pair.substr(0, eq));
  const std::string value = trim(pair.substr(eq + 1));
  if (key.find('.') == std::string::npos && !default_namespace.empty())
    key = default_namespace + "." + key;
  set(key, value);
}

void KeyValueConfig::merge_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0)
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected key=value");
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

std::string KeyValueConfig::get_string(const std::string& key) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) throw std::runtime_error("missing required config key '" + key + "'");
  return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key,
                                       const std::string& fallback) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? fallback : it->second;
}

int KeyValueConfig::get_int(const std::string& key, int fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  try {
    std::size_t used = 0;
    const int v = std::stoi(it->second, &used);
    if (used != it->second.size()) bad_value(key, it->second, "an integer");
    return v;
  } catch (const std::invalid_argument&) {
    bad_value(key, it->second, "an integer");
  } catch (const std::out_of_range&) {
    bad_value(key, it->second, "an integer");
  }
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) bad_value(key, it->second, "a number");
    return v;
  } catch (const std::invalid_argument&) {
    bad_value(key, it->second, "a number");
  } catch (const std::out_of_range&) {
    bad_value(key, it->second, "a number");
  }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  try {
    std::size_t used = 0;
    const std::uint64_t v = std::stoull(it->second, &used);
    if (used != it->second.size()) bad_value(key, it->second, "an unsigned integer");
    return v;
  } catch (const std::invalid_argument&) {
    bad_value(key, it->second, "an unsigned integer");
  } catch (const std::out_of_range&) {
    bad_value(key, it->second, "an unsigned integer");
  }
}

std::string KeyValueConfig::serialize() const {
  std::ostringstream os;
  for (const auto& [k, v] : kv_) os << k << '=' << v << "\n";
  return os.str();
}

}  // namespace ktrace
