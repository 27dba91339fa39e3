#pragma once

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace flash {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Flat "key = value" configuration with '#' comments.  Keys use dotted
// namespaces (problem.d, negcurve.method, ...).  Duplicate keys are rejected;
// unknown keys are rejected once the consumer declares its key set.
class KeyValueConfig {
 public:
  static KeyValueConfig from_string(const std::string& text) {
    KeyValueConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
      const std::string key = trim(trimmed.substr(0, eq));
      const std::string value = trim(trimmed.substr(eq + 1));
      if (key.empty())
        throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
      if (cfg.values_.count(key))
        throw ConfigError("config: duplicate key '" + key + "'");
      cfg.values_[key] = value;
    }
    return cfg;
  }

  static KeyValueConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_string(buf.str());
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& def) const {
    const auto it = values_.find(key);
    return it == values_.end() ? def : it->second;
  }

  long long get_int(const std::string& key, long long def) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return def;
    return parse_int(key, it->second);
  }

  double get_real(const std::string& key, double def) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return def;
    return parse_real(key, it->second);
  }

  std::vector<std::uint64_t> get_uint_list(const std::string& key,
                                           std::vector<std::uint64_t> def) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return def;
    std::vector<std::uint64_t> out;
    std::istringstream in(it->second);
    std::string item;
    while (std::getline(in, item, ',')) {
      const std::string t = trim(item);
      if (t.empty()) throw ConfigError("config key '" + key + "': empty list element");
      const long long v = parse_int(key, t);
      if (v < 0) throw ConfigError("config key '" + key + "': negative list element");
      out.push_back(static_cast<std::uint64_t>(v));
    }
    if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
    return out;
  }

  // Rejects any key outside the declared set, so typos fail loudly instead of
  // silently falling back to defaults.
  void require_known(const std::set<std::string>& allowed) const {
    for (const auto& [key, value] : values_)
      if (!allowed.count(key)) throw ConfigError("config: unknown key '" + key + "'");
  }

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  static std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
  }

  static long long parse_int(const std::string& key, const std::string& value) {
    errno = 0;
    char* end = nullptr;
    const long long v = std::strtoll(value.c_str(), &end, 10);
    if (errno != 0 || end == value.c_str() || *end != '\0')
      throw ConfigError("config key '" + key + "': '" + value + "' is not an integer");
    return v;
  }

  static double parse_real(const std::string& key, const std::string& value) {
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(value.c_str(), &end);
    if (errno != 0 || end == value.c_str() || *end != '\0')
      throw ConfigError("config key '" + key + "': '" + value + "' is not a number");
    return v;
  }

  std::map<std::string, std::string> values_;
};

}  // namespace flash
