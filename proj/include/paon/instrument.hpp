#pragma once

// Analytic operation counting and denominator (singularity) instrumentation.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace paon {

/// Forward-pass operation counts of one layer, following the convolutional
/// Paon complexity formulas.
struct LayerOps {
  std::string layer;
  std::uint64_t multiplications = 0;  // convolution / matmul multiplies
  std::uint64_t divisions = 0;
  std::uint64_t aux_tensor_ops = 0;   // elementwise products forming P, Q and their squares
  std::uint64_t shifter_mults = 0;    // offset-head convolution multiplies
  std::uint64_t shifter_interp_ops = 0;

  /// MAC view: every multiply plus the 4-tap interpolation weights.
  [[nodiscard]] std::uint64_t macs() const {
    return multiplications + shifter_mults + shifter_interp_ops;
  }
  /// FLOP view: multiply + accumulate of every convolution / matmul term.
  [[nodiscard]] std::uint64_t flops() const { return 2 * (multiplications + shifter_mults); }

  LayerOps& operator+=(const LayerOps& o);
};

struct OpCountReport {
  std::vector<LayerOps> layers;
  [[nodiscard]] LayerOps totals() const;
};

/// Per-layer counts of denominator values with magnitude below a threshold.
class SingularityLog {
 public:
  explicit SingularityLog(double threshold = 0.01) : threshold_(threshold) {}

  [[nodiscard]] double threshold() const { return threshold_; }
  void record(const std::string& layer, std::uint64_t events);
  void record_clamps(std::uint64_t n) { clamp_events_ += n; }
  /// Zeroes the per-layer counters, keeping the layer order.
  void reset_counts();

  [[nodiscard]] const std::vector<std::string>& layers() const { return layers_; }
  [[nodiscard]] const std::vector<std::uint64_t>& counts() const { return counts_; }
  [[nodiscard]] std::uint64_t total() const;
  [[nodiscard]] std::uint64_t clamp_events() const { return clamp_events_; }

 private:
  double threshold_;
  std::vector<std::string> layers_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t clamp_events_ = 0;
};

/// Number of entries with |q| < threshold; with threshold 0 only exact zeros count.
template <typename T>
std::uint64_t singularity_scan(std::span<const T> q, double threshold) {
  std::uint64_t n = 0;
  for (T v : q) {
    const double a = v < T{0} ? -static_cast<double>(v) : static_cast<double>(v);
    if (a < threshold || a == 0.0) ++n;
  }
  return n;
}

}  // namespace paon
