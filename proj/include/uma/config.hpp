#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace uma {

/// One recognised configuration key.
struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string description;
  /// Value reported for the original full-scale system, empty when it gives none.
  std::string reference_value;
};

/// All keys understood by the run configuration, in display order.
const std::vector<ConfigKey>& config_schema();

/// Flat `key = value` configuration shared by every component.
///
/// Precedence is explicit set() > loaded file > built-in default. Unknown keys
/// are rejected with a ParseError.
class RunConfig {
 public:
  RunConfig();

  /// Parses `key = value` lines; `#` starts a comment, blank lines are ignored.
  static RunConfig from_text(const std::string& text);
  static RunConfig from_file(const std::filesystem::path& path);

  void merge_text(const std::string& text);
  void set(const std::string& key, const std::string& value);
  /// Parses "key=value".
  void set_assignment(const std::string& assignment);

  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  long long get_int(const std::string& key) const;
  std::uint64_t seed() const;

  /// All keys with their effective values, one `key = value` per line.
  std::string to_text() const;

 private:
  std::map<std::string, std::string> values_;
};

/// Human-readable listing of every key, default and reference value.
std::string config_help();

}  // namespace uma
