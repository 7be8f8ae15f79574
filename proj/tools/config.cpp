#include "config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "paon/data.hpp"

namespace paon::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string build_id() {
#if defined(__clang__)
  return "clang-" + std::to_string(__clang_major__) + "." + std::to_string(__clang_minor__);
#elif defined(__GNUC__)
  return "gcc-" + std::to_string(__GNUC__) + "." + std::to_string(__GNUC_MINOR__);
#else
  return "unknown";
#endif
}

}  // namespace

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

double parse_real(const std::string& s, const std::string& what) {
  const std::string t = trim(s);
  if (t == "inf" || t == "+inf") return std::numeric_limits<double>::infinity();
  if (t == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0;
  const auto* end = t.data() + t.size();
  const auto [p, ec] = std::from_chars(t.data(), end, v);
  if (t.empty() || ec != std::errc() || p != end) throw UsageError(what + ": '" + s + "' is not a number");
  return v;
}

std::int64_t parse_integer(const std::string& s, const std::string& what) {
  const std::string t = trim(s);
  std::int64_t v = 0;
  const auto* end = t.data() + t.size();
  const auto [p, ec] = std::from_chars(t.data(), end, v);
  if (t.empty() || ec != std::errc() || p != end) throw UsageError(what + ": '" + s + "' is not an integer");
  return v;
}

PaonDegree parse_degree(const std::string& s) {
  const auto parts = split(s, '/');
  if (parts.size() != 2) throw UsageError("degree '" + s + "' must look like K/L");
  return PaonDegree{static_cast<int>(parse_integer(parts[0], "degree K")),
                    static_cast<int>(parse_integer(parts[1], "degree L"))};
}

Config::Config(std::string command, std::vector<KeySpec> keys)
    : command_(std::move(command)), keys_(std::move(keys)) {
  for (const auto& k : keys_) values_[k.name] = k.default_value;
}

void Config::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("unknown key '" + key + "' for command " + command_);
  it->second = trim(value);
}

void Config::assign(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw UsageError("expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void Config::load_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw UsageError(origin + ":" + std::to_string(number) + ": expected key=value");
    const std::string key = trim(t.substr(0, eq)), value = trim(t.substr(eq + 1));
    if (key == "command") {
      if (value != command_)
        throw UsageError(origin + ": written for command '" + value + "', not '" + command_ + "'");
      continue;
    }
    if (key == "paon_version" || key == "build") continue;
    try {
      set(key, value);
    } catch (const UsageError& e) {
      throw UsageError(origin + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

void Config::load_file(const std::string& path) { load_text(read_file(path), path); }

const std::string& Config::str(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw Error("internal: key '" + key + "' not registered for " + command_);
  return it->second;
}

double Config::real(const std::string& key) const { return parse_real(str(key), key); }

std::int64_t Config::integer(const std::string& key) const { return parse_integer(str(key), key); }

std::size_t Config::size(const std::string& key) const {
  const auto v = integer(key);
  if (v < 0) throw UsageError(key + " must be non-negative");
  return static_cast<std::size_t>(v);
}

std::uint64_t Config::u64(const std::string& key) const {
  const std::string& s = str(key);
  std::uint64_t v = 0;
  const auto* end = s.data() + s.size();
  const auto [p, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc() || p != end) throw UsageError(key + ": '" + s + "' is not an unsigned integer");
  return v;
}

bool Config::flag(const std::string& key) const {
  const std::string& s = str(key);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw UsageError(key + ": '" + s + "' is not a boolean");
}

std::vector<double> Config::reals(const std::string& key) const {
  std::vector<double> out;
  for (const auto& s : split(str(key), ',')) out.push_back(parse_real(s, key));
  return out;
}

std::vector<std::size_t> Config::sizes(const std::string& key) const {
  std::vector<std::size_t> out;
  for (const auto& s : split(str(key), ',')) {
    const auto v = parse_integer(s, key);
    if (v < 0) throw UsageError(key + " entries must be non-negative");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::vector<std::string> Config::strings(const std::string& key) const { return split(str(key), ','); }

PaonDegree Config::degree(const std::string& key) const { return parse_degree(str(key)); }

std::string Config::manifest() const {
  std::ostringstream out;
  out << "# paon run manifest\n";
  out << "command=" << command_ << "\n";
  out << "paon_version=" << kVersion << "\n";
  out << "build=" << build_id() << "\n";
  for (const auto& [k, v] : values_) out << k << "=" << v << "\n";
  return out.str();
}

}  // namespace paon::cli
