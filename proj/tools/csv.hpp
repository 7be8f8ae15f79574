#pragma once

#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "paon/data.hpp"
#include "paon/training.hpp"

namespace paon::cli {

class Csv {
 public:
  explicit Csv(const std::vector<std::string>& header) { row_strings(header); }

  template <typename... Ts>
  void row(const Ts&... cells) {
    std::vector<std::string> s{cell(cells)...};
    row_strings(s);
  }

  [[nodiscard]] std::string str() const { return out_.str(); }
  void write(const std::filesystem::path& path) const { write_file(path, str()); }

  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  static std::string cell(bool b) { return b ? "1" : "0"; }
  static std::string cell(double v) { return format_double(v); }
  template <typename I, typename = std::enable_if_t<std::is_integral_v<I>>>
  static std::string cell(I v) {
    return std::to_string(v);
  }

 private:
  void row_strings(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << "\n";
  }
  std::ostringstream out_;
};

}  // namespace paon::cli
