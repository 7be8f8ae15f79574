#pragma once

// Receptive-field expansion by learned, bounded feature shifts.
//
// Kernel-wise shifting moves each input channel as a whole:
//   b <  0  disabled (identity),
//   b >  0  one learned (dx, dy) per channel, bounded by m = b,
//   b == 0  data-dependent (dx, dy) per channel from a global average, a 1x1
//           dense map C -> 2C and the scaled tanh with m = max(h, w) / 4.
// Element-wise shifting predicts a (dx, dy) per pixel and channel with a
// k_s x k_s convolution C -> 2C, bounded by m = b (b > 0) or max(h, w) / 4.
// Every offset head starts at zero, so a fresh shifter is the identity.

#include <string>

#include "paon/module.hpp"
#include "paon/nn_ops.hpp"

namespace paon {

enum class ShifterKind { KernelWise, ElementWise };

struct ShifterConfig {
  ShifterKind kind = ShifterKind::ElementWise;
  int b = 0;
  std::size_t kernel = 1;  // offset-head kernel k_s (element-wise only)

  void validate() const;
};

/// Maximum allowable shift m for a feature map of h x w.
double offset_limit(int b, std::size_t h, std::size_t w);

/// m * tanh(raw / m); strictly inside (-m, m).
template <typename T>
Tensor<T> limit_offsets(const Tensor<T>& raw, double m);

template <typename T>
class Shifter {
 public:
  Shifter(std::string name, ShifterConfig cfg, std::size_t channels);

  [[nodiscard]] bool active() const { return !(cfg_.kind == ShifterKind::KernelWise && cfg_.b < 0); }
  [[nodiscard]] const ShifterConfig& config() const { return cfg_; }
  [[nodiscard]] std::size_t channels() const { return channels_; }

  /// Limited offsets as an (N, 2C, H, W) map; channel 2c is dx, 2c+1 is dy.
  Var<T> offsets(ForwardContext<T>& ctx, const Var<T>& x);
  Var<T> forward(ForwardContext<T>& ctx, const Var<T>& x);

  ParamList<T> parameters();
  [[nodiscard]] LayerOps count_ops(const Shape& in) const;

  /// Offset-head weight: (2C, C, k_s, k_s) element-wise, (2C, C) kernel-wise b = 0,
  /// raw shifts (1, 2C) kernel-wise b > 0.
  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  std::string name_;
  ShifterConfig cfg_;
  std::size_t channels_;
  Parameter<T> weight_;
  Parameter<T> bias_;
};

}  // namespace paon
