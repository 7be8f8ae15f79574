#pragma once

#include <chrono>
#include <optional>
#include <string>

#include "config.hpp"
#include "paon/layers.hpp"
#include "paon/random.hpp"

namespace paon::cli {

/// "none", "kernel" or "element".
std::optional<ShifterConfig> parse_shifter(const std::string& kind, int b, std::size_t kernel);
std::string shifter_name(const std::optional<ShifterConfig>& s);
PaonForm parse_form(const std::string& s);
std::string form_name(PaonForm f);

template <typename T>
void randomize(const ParamList<T>& params, Rng& rng, double scale) {
  for (auto* p : params)
    for (auto& v : p->value.values()) v = static_cast<T>(rng.uniform(-scale, scale));
}

template <typename T>
Tensor<T> random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(s));
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

class Stopwatch {
 public:
  [[nodiscard]] double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace paon::cli
