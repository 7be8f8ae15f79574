#include "paon/approx.hpp"

#include <cmath>

namespace paon {

double PolynomialFit::operator()(double x) const {
  double y = 0.0;
  for (auto it = coef.rbegin(); it != coef.rend(); ++it) y = y * x + *it;
  return y;
}

namespace {

// Solves A z = r in place by Gaussian elimination with partial pivoting.
std::vector<long double> solve(std::vector<std::vector<long double>> A, std::vector<long double> r) {
  const std::size_t n = r.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t i = c + 1; i < n; ++i)
      if (std::fabs(A[i][c]) > std::fabs(A[piv][c])) piv = i;
    if (A[piv][c] == 0.0L) throw Error("least squares: singular system");
    std::swap(A[piv], A[c]);
    std::swap(r[piv], r[c]);
    for (std::size_t i = c + 1; i < n; ++i) {
      const long double f = A[i][c] / A[c][c];
      for (std::size_t j = c; j < n; ++j) A[i][j] -= f * A[c][j];
      r[i] -= f * r[c];
    }
  }
  std::vector<long double> z(n);
  for (std::size_t i = n; i-- > 0;) {
    long double s = r[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= A[i][j] * z[j];
    z[i] = s / A[i][i];
  }
  return z;
}

std::vector<double> flatten(const ScalarPaon& m) {
  std::vector<double> v = m.a;
  v.insert(v.end(), m.b.begin(), m.b.end());
  return v;
}

void unflatten(ScalarPaon& m, const std::vector<double>& v) {
  for (std::size_t i = 0; i < m.a.size(); ++i) m.a[i] = v[i];
  for (std::size_t i = 0; i < m.b.size(); ++i) m.b[i] = v[m.a.size() + i];
}

double sse(const ScalarPaon& m, const Samples1d& s) {
  double e = 0.0;
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    const double d = m(s.x[i]) - s.y[i];
    e += d * d;
  }
  return e;
}

// Levenberg-Marquardt on the coefficient vector with a central-difference Jacobian.
void polish(ScalarPaon& m, const Samples1d& s, std::size_t steps) {
  auto theta = flatten(m);
  const std::size_t P = theta.size(), N = s.x.size();
  double lambda = 1e-3;
  double current = sse(m, s);
  for (std::size_t step = 0; step < steps && current > 0.0; ++step) {
    std::vector<std::vector<double>> J(N, std::vector<double>(P));
    for (std::size_t j = 0; j < P; ++j) {
      const double h = 1e-6 * std::max(1.0, std::abs(theta[j]));
      auto tp = theta, tm = theta;
      tp[j] += h;
      tm[j] -= h;
      ScalarPaon mp = m, mm = m;
      unflatten(mp, tp);
      unflatten(mm, tm);
      for (std::size_t i = 0; i < N; ++i) J[i][j] = (mp(s.x[i]) - mm(s.x[i])) / (2 * h);
    }
    std::vector<std::vector<long double>> JtJ(P, std::vector<long double>(P, 0.0L));
    std::vector<long double> Jtr(P, 0.0L);
    for (std::size_t i = 0; i < N; ++i) {
      const double r = s.y[i] - m(s.x[i]);
      for (std::size_t a = 0; a < P; ++a) {
        Jtr[a] += J[i][a] * r;
        for (std::size_t b = 0; b < P; ++b) JtJ[a][b] += J[i][a] * J[i][b];
      }
    }
    bool improved = false;
    for (int attempt = 0; attempt < 12 && !improved; ++attempt) {
      auto A = JtJ;
      for (std::size_t a = 0; a < P; ++a) A[a][a] += lambda * (JtJ[a][a] + 1e-12L);
      std::vector<long double> delta;
      try {
        delta = solve(A, Jtr);
      } catch (const Error&) {
        lambda *= 10;
        continue;
      }
      auto cand = theta;
      for (std::size_t a = 0; a < P; ++a) cand[a] += static_cast<double>(delta[a]);
      ScalarPaon mc = m;
      unflatten(mc, cand);
      const double e = sse(mc, s);
      if (std::isfinite(e) && e < current) {
        theta = cand;
        m = mc;
        current = e;
        lambda = std::max(lambda / 10, 1e-12);
        improved = true;
      } else {
        lambda *= 10;
      }
    }
    if (!improved) break;
  }
}

}  // namespace

PolynomialFit fit_polynomial_least_squares(const Samples1d& s, int degree) {
  if (degree < 0) throw Error("fit_polynomial_least_squares: negative degree");
  const std::size_t n = static_cast<std::size_t>(degree) + 1;
  if (s.x.size() < n) throw Error("fit_polynomial_least_squares: too few samples");
  // Normal equations sum x^(i+j) c_j = sum x^i y.
  std::vector<std::vector<long double>> A(n, std::vector<long double>(n, 0.0L));
  std::vector<long double> r(n, 0.0L);
  for (std::size_t k = 0; k < s.x.size(); ++k) {
    std::vector<long double> pw(2 * n - 1);
    pw[0] = 1.0L;
    for (std::size_t i = 1; i < pw.size(); ++i) pw[i] = pw[i - 1] * s.x[k];
    for (std::size_t i = 0; i < n; ++i) {
      r[i] += pw[i] * s.y[k];
      for (std::size_t j = 0; j < n; ++j) A[i][j] += pw[i + j];
    }
  }
  const auto z = solve(A, r);
  PolynomialFit fit;
  for (auto v : z) fit.coef.push_back(static_cast<double>(v));
  return fit;
}

double mean_squared_error(const std::function<double(double)>& f, const Samples1d& s) {
  if (s.x.empty()) throw Error("mean_squared_error: no samples");
  double e = 0.0;
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    const double d = f(s.x[i]) - s.y[i];
    e += d * d;
  }
  return e / static_cast<double>(s.x.size());
}

namespace {

StudentResult fit_once(const Samples1d& train, const StudentConfig& cfg, std::uint64_t seed) {
  const auto form = cfg.smoothed ? PaonForm::Smoothed : PaonForm::Vanilla;
  PaLaDense<double> layer("student", cfg.degree, 1, 1, form);
  Rng rng(seed);
  for (auto* p : layer.parameters())
    for (auto& v : p->value.values()) v = rng.uniform(-cfg.init_range, cfg.init_range);
  const std::size_t N = train.x.size();
  const TensorD xs(Shape{N, 1}, train.x), ys(Shape{N, 1}, train.y);

  TrainTask<double> task;
  task.params = layer.parameters();
  task.loss = [&](Tape<double>& tape, SingularityLog* log, Rng&) {
    ForwardContext<double> ctx{tape, true, log};
    return ops::mse_loss(layer.forward(ctx, tape.constant(xs)), tape.constant(ys));
  };
  TrainLoopConfig loop;
  loop.iterations = cfg.iterations;
  loop.lr0 = cfg.lr0;
  loop.lr_min = cfg.lr_min;
  loop.clip_norm = 0.0;
  loop.seed = seed;

  StudentResult result;
  result.log = train_loop(task, loop);
  result.model.smoothed = cfg.smoothed;
  result.model.a.push_back(layer.bias().value[0]);
  for (int k = 1; k <= cfg.degree.K; ++k) result.model.a.push_back(layer.numerator(k).value[0]);
  for (int k = 1; k <= cfg.degree.L; ++k) result.model.b.push_back(layer.denominator(k).value[0]);
  polish(result.model, train, cfg.polish_steps);
  result.train_mse = mean_squared_error([&](double x) { return result.model(x); }, train);
  return result;
}

}  // namespace

StudentResult train_scalar_student(const Samples1d& train, const StudentConfig& cfg) {
  if (cfg.restarts == 0) throw Error("train_scalar_student: restarts must be positive");
  Rng seeds(cfg.seed);
  StudentResult best;
  for (std::size_t r = 0; r < cfg.restarts; ++r) {
    auto res = fit_once(train, cfg, seeds.next());
    if (r == 0 || res.train_mse < best.train_mse) best = std::move(res);
  }
  return best;
}

}  // namespace paon
