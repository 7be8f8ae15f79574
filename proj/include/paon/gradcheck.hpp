#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "paon/autograd.hpp"

namespace paon {

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = true;
  std::size_t checked = 0;
  std::string worst_location;
  std::vector<std::string> failures;  // non-finite gradients, with location
};

using LossFn = std::function<Var<double>(Tape<double>&)>;

/// Compares backward() against central differences with
/// h = 1e-6 * max(1, |theta|) and rel = |a - n| / max(1e-8, |a| + |n|).
/// When max_coords > 0 and the parameters hold more elements, a seeded random
/// subsample of max_coords (at least 200) coordinates is checked.
GradCheckReport grad_check(const LossFn& f, const std::vector<Parameter<double>*>& params,
                           double tol_rel, std::size_t max_coords = 0, std::uint64_t seed = 0);

}  // namespace paon
