#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include "commands.hpp"
#include "common.hpp"
#include "csv.hpp"
#include "paon/approx.hpp"
#include "paon/gradcheck.hpp"

namespace paon::cli {

std::optional<ShifterConfig> parse_shifter(const std::string& kind, int b, std::size_t kernel) {
  if (kind == "none") return std::nullopt;
  if (kind == "kernel") return ShifterConfig{ShifterKind::KernelWise, b, 1};
  if (kind == "element") return ShifterConfig{ShifterKind::ElementWise, b, kernel};
  throw UsageError("unknown shifter '" + kind + "' (none, kernel, element)");
}

std::string shifter_name(const std::optional<ShifterConfig>& s) {
  if (!s) return "none";
  return s->kind == ShifterKind::KernelWise ? "kernel" : "element";
}

PaonForm parse_form(const std::string& s) {
  if (s == "smoothed") return PaonForm::Smoothed;
  if (s == "vanilla") return PaonForm::Vanilla;
  throw UsageError("unknown form '" + s + "' (smoothed, vanilla)");
}

std::string form_name(PaonForm f) { return f == PaonForm::Smoothed ? "smoothed" : "vanilla"; }

// ---- count -----------------------------------------------------------------------

std::vector<KeySpec> count_keys() {
  return {
      {"in_channels", "3", "input channels"},
      {"out_channels", "3", "output channels"},
      {"kernel", "5", "kernel size"},
      {"height", "256", "input height"},
      {"width", "256", "input width"},
      {"batch", "1", "batch size"},
      {"degrees", "1/1,2/1,2/2", "Padé rows, comma-separated K/L"},
      {"form", "smoothed", "smoothed or vanilla"},
      {"shifter_b", "0", "shift bound b for the shifter rows"},
      {"shifter_kernel", "1", "offset-head kernel for element-wise rows"},
      {"seed", "0", "unused; kept for manifest uniformity"},
  };
}

int cmd_count(const Config& cfg, const std::filesystem::path& out, std::ostream& log) {
  Stopwatch clock;
  const std::size_t ci = cfg.size("in_channels"), co = cfg.size("out_channels"), k = cfg.size("kernel");
  const std::size_t H = cfg.size("height"), W = cfg.size("width"), N = cfg.size("batch");
  const ConvSpec spec{ci, co, k, 1, Padding::Replicate};
  const Shape in{N, ci, H, W};
  const PaonForm form = parse_form(cfg.str("form"));

  Csv csv({"model", "degree", "shifter", "multiplications", "divisions", "aux_tensor_ops", "shifter_mults",
           "shifter_interp_ops", "macs", "flops", "mac_ratio"});
  bool ok = true;
  Conv2d<float> classic("classic", spec);
  const LayerOps base = classic.count_ops(in);
  const std::uint64_t expected = std::uint64_t(N) * ci * k * k * H * W * co;
  auto emit = [&](const std::string& model, const std::string& degree, const std::string& shift, const LayerOps& o) {
    csv.row(model, degree, shift, o.multiplications, o.divisions, o.aux_tensor_ops, o.shifter_mults,
            o.shifter_interp_ops, o.macs(), o.flops(), double(o.macs()) / double(base.macs()));
    log << std::left << std::setw(12) << model << std::setw(7) << degree << std::setw(9) << shift
        << " MACs " << o.macs() << "  FLOPs " << o.flops() << "\n";
  };
  emit("classic", "-", "none", base);
  if (base.macs() != expected) {
    log << "classic MACs " << base.macs() << " differ from N Ci k^2 H W Co = " << expected << "\n";
    ok = false;
  }
  const bool anchored = ci == 3 && co == 3 && k == 5 && H == 256 && W == 256 && N == 1;
  if (anchored && base.macs() != 14745600) ok = false;

  const std::string model = form == PaonForm::Smoothed ? "paon_s" : "paon_v";
  for (const auto& ds : cfg.strings("degrees")) {
    const PaonDegree d = parse_degree(ds);
    for (const std::string shift : {"none", "kernel", "element"}) {
      PaLaConv<float> layer(model, d, spec, form,
                            parse_shifter(shift, static_cast<int>(cfg.integer("shifter_b")), cfg.size("shifter_kernel")));
      const LayerOps o = layer.count_ops(in);
      emit(model, d.str(), shift, o);
      if (shift == "none") {
        const std::uint64_t want = std::uint64_t(d.K + d.L) * expected;
        if (o.macs() != want || o.flops() != 2 * o.macs()) {
          log << d.str() << ": MACs " << o.macs() << " differ from (K+L) x classic = " << want << "\n";
          ok = false;
        }
        if (anchored && d == PaonDegree{1, 1} && o.macs() != 29491200) ok = false;
      }
    }
  }
  csv.write(out / "count.csv");
  log << "count: " << clock.seconds() << " s\n";
  return ok ? kOk : kCheckFailed;
}

// ---- gradcheck ---------------------------------------------------------------------

std::vector<KeySpec> gradcheck_keys() {
  return {
      {"degrees", "1/0,2/0,1/1,2/1", "degrees to check"},
      {"forms", "smoothed,vanilla", "forms to check"},
      {"shifters", "none,kernel,element", "shifters to check (conv layers only)"},
      {"shifter_b", "0", "shift bound b"},
      {"shifter_kernel", "3", "element-wise offset-head kernel"},
      {"in_channels", "2", "conv input channels"},
      {"out_channels", "2", "conv output channels"},
      {"kernel", "3", "conv kernel size"},
      {"size", "5", "conv input height and width"},
      {"batch", "2", "batch size"},
      {"dense_in", "3", "dense input features"},
      {"dense_out", "2", "dense output features"},
      {"param_scale", "0.2", "parameters ~ U(-s, s)"},
      {"tol", "1e-4", "relative error tolerance"},
      {"max_coords", "0", "check a random subset of this many coordinates (0: all)"},
      {"seed", "0", "random seed"},
  };
}

int cmd_gradcheck(const Config& cfg, const std::filesystem::path& out, std::ostream& log) {
  Stopwatch clock;
  Rng rng(cfg.u64("seed"));
  const double scale = cfg.real("param_scale"), tol = cfg.real("tol");
  const std::size_t coords = cfg.size("max_coords"), N = cfg.size("batch"), S = cfg.size("size");
  const ConvSpec spec{cfg.size("in_channels"), cfg.size("out_channels"), cfg.size("kernel"), 1, Padding::Replicate};
  Csv csv({"layer", "degree", "form", "shifter", "checked", "max_rel_err", "pass"});
  bool ok = true;
  auto record = [&](const std::string& layer, PaonDegree d, PaonForm form, const std::string& shift,
                    const GradCheckReport& r) {
    csv.row(layer, d.str(), form_name(form), shift, r.checked, r.max_rel_err, r.pass);
    log << layer << " " << d.str() << " " << form_name(form) << " shifter=" << shift << "  max rel err "
        << r.max_rel_err << (r.pass ? "" : "  FAIL at " + r.worst_location) << "\n";
    ok = ok && r.pass;
  };
  for (const auto& ds : cfg.strings("degrees")) {
    const PaonDegree d = parse_degree(ds);
    for (const auto& fs : cfg.strings("forms")) {
      const PaonForm form = parse_form(fs);
      for (const auto& shift : cfg.strings("shifters")) {
        PaLaConv<double> layer("conv", d, spec, form,
                               parse_shifter(shift, static_cast<int>(cfg.integer("shifter_b")), cfg.size("shifter_kernel")));
        randomize(layer.parameters(), rng, scale);
        Parameter<double> x("x", random_tensor<double>({N, spec.in_channels, S, S}, rng));
        auto params = layer.parameters();
        params.push_back(&x);
        auto f = [&](Tape<double>& t) {
          ForwardContext<double> ctx{t, true, nullptr};
          return ops::mean(ops::pow(layer.forward(ctx, t.param(x)), 2));
        };
        record("conv", d, form, shift, grad_check(f, params, tol, coords, rng.next()));
      }
      PaLaDense<double> dense("dense", d, cfg.size("dense_in"), cfg.size("dense_out"), form);
      randomize(dense.parameters(), rng, scale);
      Parameter<double> x("x", random_tensor<double>({N, cfg.size("dense_in")}, rng));
      auto params = dense.parameters();
      params.push_back(&x);
      auto f = [&](Tape<double>& t) {
        ForwardContext<double> ctx{t, true, nullptr};
        return ops::mean(ops::pow(dense.forward(ctx, t.param(x)), 2));
      };
      record("dense", d, form, "none", grad_check(f, params, tol, coords, rng.next()));
    }
  }
  csv.write(out / "gradcheck.csv");
  log << "gradcheck: " << clock.seconds() << " s\n";
  return ok ? kOk : kCheckFailed;
}

// ---- reduce-check ------------------------------------------------------------------

std::vector<KeySpec> reduce_check_keys() {
  return {
      {"instances", "100", "random instances per reduction"},
      {"in_channels", "2", "input channels"},
      {"out_channels", "3", "output channels"},
      {"kernel", "3", "kernel size"},
      {"size", "6", "input height and width"},
      {"batch", "2", "batch size"},
      {"tol", "1e-12", "max absolute difference"},
      {"seed", "0", "random seed"},
  };
}

namespace {

double max_abs_diff(const TensorD& a, const TensorD& b) {
  TensorD::require_same_shape(a, b, "reduce-check");
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

struct ReductionResult {
  double output = 0, gradient = 0;
};

// Padé layer of degree [K/0] against sum_k conv(x^k, W_k) + bias built from
// plain operations with copies of the same weights.
ReductionResult check_polynomial(int K, PaonForm form, const ConvSpec& spec, const Shape& xs, Rng& rng) {
  PaLaConv<double> layer("paon", {K, 0}, spec, form);
  randomize(layer.parameters(), rng, 1.0);
  const TensorD x = random_tensor<double>(xs, rng);
  std::vector<Parameter<double>> w;
  for (int k = 1; k <= K; ++k) w.emplace_back("w" + std::to_string(k), layer.numerator(k).value);
  Parameter<double> bias("bias", layer.bias().value);

  Tape<double> t1;
  ForwardContext<double> ctx{t1, true, nullptr};
  auto y1 = layer.forward(ctx, t1.constant(x));
  const TensorD r = random_tensor<double>(y1.shape(), rng);
  t1.backward(ops::sum(y1 * t1.constant(r)));

  Tape<double> t2;
  auto xv = t2.constant(x);
  auto power = xv;
  Var<double> y2 = ops::conv2d(xv, t2.param(w[0]), std::optional<Var<double>>(t2.param(bias)), spec);
  for (int k = 2; k <= K; ++k) {
    power = power * xv;
    y2 = y2 + ops::conv2d(power, t2.param(w[static_cast<std::size_t>(k - 1)]), std::optional<Var<double>>{}, spec);
  }
  t2.backward(ops::sum(y2 * t2.constant(r)));

  ReductionResult res;
  res.output = max_abs_diff(y1.value(), y2.value());
  for (int k = 1; k <= K; ++k)
    res.gradient = std::max(res.gradient, max_abs_diff(layer.numerator(k).grad, w[static_cast<std::size_t>(k - 1)].grad));
  res.gradient = std::max(res.gradient, max_abs_diff(layer.bias().grad, bias.grad));
  return res;
}

}  // namespace

int cmd_reduce_check(const Config& cfg, const std::filesystem::path& out, std::ostream& log) {
  Rng rng(cfg.u64("seed"));
  const ConvSpec spec{cfg.size("in_channels"), cfg.size("out_channels"), cfg.size("kernel"), 1, Padding::Replicate};
  const Shape xs{cfg.size("batch"), spec.in_channels, cfg.size("size"), cfg.size("size")};
  const double tol = cfg.real("tol");
  Csv csv({"instance", "reduction", "form", "max_abs_output", "max_abs_grad"});
  double worst_out = 0, worst_grad = 0;
  for (std::size_t i = 0; i < cfg.size("instances"); ++i)
    for (int K : {1, 2})
      for (PaonForm form : {PaonForm::Smoothed, PaonForm::Vanilla}) {
        const auto r = check_polynomial(K, form, spec, xs, rng);
        csv.row(i, K == 1 ? "ordinary" : "quadratic", form_name(form), r.output, r.gradient);
        worst_out = std::max(worst_out, r.output);
        worst_grad = std::max(worst_grad, r.gradient);
      }
  csv.write(out / "reduce_check.csv");

  Csv families({"degree", "shifter", "family"});
  bool families_ok = true;
  const std::vector<std::pair<PaonDegree, std::optional<ShifterConfig>>> table{
      {{1, 0}, std::nullopt},
      {{2, 0}, std::nullopt},
      {{3, 0}, std::nullopt},
      {{1, 0}, ShifterConfig{ShifterKind::KernelWise, 0, 1}},
      {{2, 0}, ShifterConfig{ShifterKind::ElementWise, 0, 1}},
      {{1, 0}, ShifterConfig{ShifterKind::KernelWise, -1, 1}},
      {{1, 1}, std::nullopt},
      {{2, 1}, ShifterConfig{ShifterKind::ElementWise, 0, 1}},
  };
  const std::vector<NeuronFamily> expect{NeuronFamily::Ordinary, NeuronFamily::Quadratic, NeuronFamily::Generative,
                                         NeuronFamily::Super,    NeuronFamily::Super,     NeuronFamily::Ordinary,
                                         NeuronFamily::Pade,     NeuronFamily::Pade};
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto fam = reduce_config(table[i].first, table[i].second);
    std::string shift = shifter_name(table[i].second);
    if (table[i].second) shift += ":b=" + std::to_string(table[i].second->b);
    families.row(table[i].first.str(), shift, to_string(fam));
    families_ok = families_ok && fam == expect[i];
  }
  families.write(out / "reduce_families.csv");

  log << "[1/0] vs conv and [2/0] vs quadratic form: max |d output| " << worst_out << ", max |d grad| "
      << worst_grad << " (tol " << tol << ")\n";
  const bool ok = worst_out <= tol && worst_grad <= tol && families_ok;
  return ok ? kOk : kCheckFailed;
}

// ---- approx ---------------------------------------------------------------------------

std::vector<KeySpec> approx_keys() {
  return {
      {"teacher_a", "0,1", "teacher numerator coefficients a0..aK"},
      {"teacher_b", "1", "teacher denominator coefficients b1..bL (empty: polynomial)"},
      {"teacher_form", "smoothed", "smoothed or vanilla teacher"},
      {"lo", "-3", "interval start"},
      {"hi", "3", "interval end"},
      {"samples", "400", "grid points including both ends"},
      {"test_fraction", "0.25", "held-out fraction"},
      {"student_degree", "1/1", "Padé student degree"},
      {"student_form", "smoothed", "Padé student form"},
      {"iterations", "500", "gradient steps per restart"},
      {"restarts", "16", "random restarts per student"},
      {"polish_steps", "200", "Levenberg-Marquardt steps"},
      {"lr0", "0.01", "initial learning rate"},
      {"max_paon_mse", "1e-6", "check: Padé student test MSE below this"},
      {"min_floor_ratio", "100", "check: quadratic least-squares floor at least this multiple of the Padé MSE"},
      {"seed", "0", "random seed"},
  };
}

int cmd_approx(const Config& cfg, const std::filesystem::path& out, std::ostream& log) {
  Stopwatch clock;
  ScalarPaon teacher{cfg.reals("teacher_a"), cfg.reals("teacher_b"), parse_form(cfg.str("teacher_form")) == PaonForm::Smoothed};
  if (teacher.a.empty()) throw UsageError("teacher_a needs at least a0");
  const auto all = gen_teacher_1d(cfg.size("samples"), teacher, cfg.real("lo"), cfg.real("hi"));
  const auto [train, test] = split_samples(all, cfg.real("test_fraction"), cfg.u64("seed"));

  StudentConfig sc;
  sc.iterations = cfg.size("iterations");
  sc.restarts = cfg.size("restarts");
  sc.polish_steps = cfg.size("polish_steps");
  sc.lr0 = cfg.real("lr0");
  sc.seed = cfg.u64("seed");
  sc.degree = cfg.degree("student_degree");
  sc.smoothed = parse_form(cfg.str("student_form")) == PaonForm::Smoothed;
  const auto paon = train_scalar_student(train, sc);
  sc.degree = {2, 0};
  sc.smoothed = true;
  const auto quad = train_scalar_student(train, sc);
  const auto ls = fit_polynomial_least_squares(train, 2);

  auto f_paon = [&](double x) { return paon.model(x); };
  auto f_quad = [&](double x) { return quad.model(x); };
  auto f_ls = [&](double x) { return ls(x); };
  const double paon_train = mean_squared_error(f_paon, train), paon_test = mean_squared_error(f_paon, test);
  const double quad_train = mean_squared_error(f_quad, train), quad_test = mean_squared_error(f_quad, test);
  const double ls_train = mean_squared_error(f_ls, train), ls_test = mean_squared_error(f_ls, test);

  Csv summary({"model", "degree", "train_mse", "test_mse"});
  summary.row("paon", cfg.str("student_degree"), paon_train, paon_test);
  summary.row("quadratic_paon", "2/0", quad_train, quad_test);
  summary.row("quadratic_least_squares", "2/0", ls_train, ls_test);
  summary.write(out / "approx_summary.csv");

  Csv curve({"x", "teacher", "paon", "quadratic_paon", "quadratic_least_squares"});
  for (double x : all.x) curve.row(x, teacher(x), f_paon(x), f_quad(x), f_ls(x));
  curve.write(out / "approx_curve.csv");
  paon.log.write_csv(out / "approx_log_paon.csv");
  quad.log.write_csv(out / "approx_log_quadratic.csv");

  const double floor_ratio = ls_train / std::max(paon_train, std::numeric_limits<double>::min());
  log << "Padé student " << cfg.str("student_degree") << ": train MSE " << paon_train << ", test MSE " << paon_test << "\n"
      << "quadratic Padé [2/0]: train MSE " << quad_train << ", test MSE " << quad_test << "\n"
      << "quadratic least-squares floor: train MSE " << ls_train << " (" << floor_ratio << "x the Padé student)\n"
      << "approx: " << clock.seconds() << " s\n";
  const bool ok = paon_test < cfg.real("max_paon_mse") && ls_train >= cfg.real("min_floor_ratio") * paon_train;
  return ok ? kOk : kCheckFailed;
}

}  // namespace paon::cli
