#include "paon/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "paon/random.hpp"

namespace paon {

namespace {

double evaluate(const LossFn& f) {
  Tape<double> tape;
  return f(tape).value().item();
}

}  // namespace

GradCheckReport grad_check(const LossFn& f, const std::vector<Parameter<double>*>& params,
                           double tol_rel, std::size_t max_coords, std::uint64_t seed) {
  for (auto* p : params) p->zero_grad();
  {
    Tape<double> tape;
    auto loss = f(tape);
    tape.backward(loss);
  }

  struct Coord {
    std::size_t param;
    std::size_t index;
  };
  std::vector<Coord> coords;
  for (std::size_t p = 0; p < params.size(); ++p)
    for (std::size_t i = 0; i < params[p]->size(); ++i) coords.push_back({p, i});
  if (max_coords > 0 && coords.size() > max_coords) {
    const std::size_t keep = std::max<std::size_t>(max_coords, 200);
    if (keep < coords.size()) {
      Rng rng(seed);
      for (std::size_t i = 0; i < keep; ++i) {
        const std::size_t j = i + rng.below(coords.size() - i);
        std::swap(coords[i], coords[j]);
      }
      coords.resize(keep);
    }
  }

  GradCheckReport report;
  for (const auto& c : coords) {
    Parameter<double>& p = *params[c.param];
    const double theta = p.value[c.index];
    const double h = 1e-6 * std::max(1.0, std::abs(theta));
    p.value[c.index] = theta + h;
    const double fp = evaluate(f);
    p.value[c.index] = theta - h;
    const double fm = evaluate(f);
    p.value[c.index] = theta;
    const double numeric = (fp - fm) / (2.0 * h);
    const double analytic = p.grad[c.index];
    const std::string where = p.name + "[" + std::to_string(c.index) + "]";
    ++report.checked;
    if (!std::isfinite(numeric) || !std::isfinite(analytic)) {
      report.pass = false;
      report.failures.push_back("non-finite gradient at " + where);
      continue;
    }
    const double rel =
        std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_location = where;
    }
  }
  if (report.max_rel_err > tol_rel) report.pass = false;
  return report;
}

}  // namespace paon
