#pragma once

// key=value run configuration with a fixed key registry per command.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "paon/layers.hpp"

namespace paon::cli {

/// Bad command line or configuration (exit code 2).
class UsageError : public Error {
 public:
  using Error::Error;
};

struct KeySpec {
  std::string name;
  std::string default_value;
  std::string help;
};

inline constexpr const char* kVersion = "0.1.0";

class Config {
 public:
  Config(std::string command, std::vector<KeySpec> keys);

  /// Throws UsageError for keys not in the registry.
  void set(const std::string& key, const std::string& value);
  /// Applies a "key=value" assignment.
  void assign(const std::string& assignment);
  /// Applies every non-empty, non-comment line of a config or manifest. The
  /// manifest keys `command` (must match), `paon_version` and `build` are
  /// accepted and not stored.
  void load_text(const std::string& text, const std::string& origin);
  void load_file(const std::string& path);

  [[nodiscard]] const std::string& command() const { return command_; }
  [[nodiscard]] const std::vector<KeySpec>& keys() const { return keys_; }
  [[nodiscard]] const std::string& str(const std::string& key) const;
  [[nodiscard]] double real(const std::string& key) const;
  [[nodiscard]] std::int64_t integer(const std::string& key) const;
  [[nodiscard]] std::size_t size(const std::string& key) const;
  [[nodiscard]] std::uint64_t u64(const std::string& key) const;
  [[nodiscard]] bool flag(const std::string& key) const;
  /// Comma-separated lists; an empty value is an empty list.
  [[nodiscard]] std::vector<double> reals(const std::string& key) const;
  [[nodiscard]] std::vector<std::size_t> sizes(const std::string& key) const;
  [[nodiscard]] std::vector<std::string> strings(const std::string& key) const;
  /// "K/L".
  [[nodiscard]] PaonDegree degree(const std::string& key) const;

  /// Resolved configuration with command and version lines; loadable by load_text.
  [[nodiscard]] std::string manifest() const;

 private:
  std::string command_;
  std::vector<KeySpec> keys_;
  std::map<std::string, std::string> values_;
};

double parse_real(const std::string& s, const std::string& what);
std::int64_t parse_integer(const std::string& s, const std::string& what);
PaonDegree parse_degree(const std::string& s);
std::vector<std::string> split(const std::string& s, char sep);

}  // namespace paon::cli
