#pragma once

// One-dimensional approximation experiments: scalar Padé students trained on
// teacher samples and the closed-form least-squares polynomial baseline.

#include <cstdint>
#include <functional>
#include <vector>

#include "paon/data.hpp"
#include "paon/layers.hpp"
#include "paon/training.hpp"

namespace paon {

/// Least-squares polynomial of the given degree via the normal equations.
struct PolynomialFit {
  std::vector<double> coef;  // c0..cd
  [[nodiscard]] double operator()(double x) const;
};

PolynomialFit fit_polynomial_least_squares(const Samples1d& s, int degree);

double mean_squared_error(const std::function<double(double)>& f, const Samples1d& s);

struct StudentConfig {
  PaonDegree degree{1, 1};
  bool smoothed = true;
  std::size_t iterations = 500;
  double lr0 = 1e-2;
  double lr_min = 1e-7;
  std::uint64_t seed = 0;
  /// Damped Gauss-Newton polishing steps after the gradient phase.
  std::size_t polish_steps = 200;
  /// Independent random starts (all coefficients ~ U(-init_range, init_range));
  /// the best training fit is kept.
  std::size_t restarts = 16;
  double init_range = 2.0;
};

struct StudentResult {
  ScalarPaon model;
  double train_mse = 0.0;
  RunLog log;
};

/// Fits a single scalar Padé neuron to the samples: full-batch AdamW on the
/// squared error, then Levenberg-Marquardt polishing. A zero denominator
/// start is a stationary point when a0 = 0, hence the random starts.
StudentResult train_scalar_student(const Samples1d& train, const StudentConfig& cfg);

}  // namespace paon
