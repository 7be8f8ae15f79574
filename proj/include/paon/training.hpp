#pragma once

// Optimization: AdamW, cosine schedule, gradient clipping, augmentation and a
// deterministic training loop producing a RunLog.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "paon/instrument.hpp"
#include "paon/module.hpp"
#include "paon/random.hpp"

namespace paon {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Adam with decoupled weight decay. A step whose gradients contain a
/// non-finite value is skipped and counted.
template <typename T>
class AdamW {
 public:
  AdamW(ParamList<T> params, AdamWConfig cfg);

  /// Returns false when the step was skipped.
  bool step(double lr);
  void zero_grad();
  [[nodiscard]] std::size_t steps() const { return t_; }
  [[nodiscard]] std::size_t skipped() const { return skipped_; }

 private:
  ParamList<T> params_;
  AdamWConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
  std::size_t skipped_ = 0;
};

/// lr_min + (lr0 - lr_min) (1 + cos(pi t / T)) / 2 for 0 <= t <= T.
double cosine_lr(std::size_t t, std::size_t T, double lr0, double lr_min);

/// Rescales all gradients so their global L2 norm is at most max_norm;
/// returns the norm before clipping.
template <typename T>
double clip_grad_norm(const ParamList<T>& params, double max_norm);

template <typename T>
double global_grad_norm(const ParamList<T>& params);

// ---- Augmentation (images are (C, H, W)) --------------------------------------

struct AugmentConfig {
  bool flips = true;
  bool rot90 = true;
  bool channel_shuffle = true;
  double probability = 0.5;
  /// Gaussian noise level; +inf disables noise.
  double snr_db = std::numeric_limits<double>::infinity();
};

TensorF flip_horizontal(const TensorF& img);
TensorF flip_vertical(const TensorF& img);
/// Counter-clockwise rotation by 90 degrees.
TensorF rotate90(const TensorF& img);
TensorF permute_channels(const TensorF& img, const std::vector<std::size_t>& order);

/// Mean of x^2 over the image.
double signal_power(const TensorF& img);
/// Adds N(0, sigma^2) noise with sigma^2 = power / 10^(snr / 10); returns sigma^2.
double add_noise(TensorF& img, double snr_db, Rng& rng);

/// Applies the same geometric ops to both images of an SR pair; noise goes to
/// the low-resolution input only.
void augment_pair(TensorF& lr, TensorF& hr, const AugmentConfig& cfg, Rng& rng);
void augment_image(TensorF& img, const AugmentConfig& cfg, Rng& rng);

// ---- Training loop ----------------------------------------------------------

struct TrainLoopConfig {
  std::size_t iterations = 1000;
  double lr0 = 1e-3;
  double lr_min = 1e-6;
  AdamWConfig adamw;
  double clip_norm = 1.0;  // <= 0 disables clipping
  std::size_t eval_every = 0;  // 0: evaluate only after the last iteration
  std::uint64_t seed = 0;
};

template <typename T>
struct TrainTask {
  ParamList<T> params;
  /// Draws a batch from batch_rng, runs the forward pass on the tape and
  /// returns the scalar loss.
  std::function<Var<T>(Tape<T>& tape, SingularityLog* log, Rng& batch_rng)> loss;
  /// Validation metric, higher is better.
  std::function<double()> evaluate;
  /// Called whenever the validation metric improves.
  std::function<void(std::size_t iter, double metric)> on_best;
};

struct RunRecord {
  std::size_t iter = 0;
  double lr = 0.0;
  double loss = 0.0;
  double metric = std::numeric_limits<double>::quiet_NaN();  // NaN when not evaluated
  std::vector<std::uint64_t> events;
};

struct RunLog {
  std::vector<std::string> layers;
  std::vector<RunRecord> records;
  double best_metric = -std::numeric_limits<double>::infinity();
  std::size_t best_iter = 0;
  std::size_t skipped_steps = 0;

  /// iter,lr,loss,metric,qzero_events_<layer>... with round-trip precision.
  [[nodiscard]] std::string csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

/// Thrown when the loss becomes non-finite.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(std::size_t iter, std::uint64_t batch_seed);
  std::size_t iter;
  std::uint64_t batch_seed;
};

/// Seed of the batch drawn at iteration `iter` (1-based) of a run.
std::uint64_t batch_seed(std::uint64_t run_seed, std::size_t iter);

/// Runs cfg.iterations AdamW steps with a cosine schedule. When `log` is given
/// its per-layer counters are recorded and reset every iteration.
template <typename T>
RunLog train_loop(TrainTask<T>& task, const TrainLoopConfig& cfg, SingularityLog* log = nullptr,
                  std::ostream* progress = nullptr);

/// Formats a double so that parsing it back yields the same value.
std::string format_double(double v);

}  // namespace paon
