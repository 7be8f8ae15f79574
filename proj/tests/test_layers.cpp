#include <gtest/gtest.h>

#include <cmath>

#include "paon/gradcheck.hpp"
#include "paon/layers.hpp"
#include "support/oracles.hpp"

using namespace paon;

namespace {

void randomize(ParamList<double> params, Rng& rng, double scale = 0.5) {
  for (auto* p : params)
    for (auto& v : p->value.values()) v = rng.uniform(-scale, scale);
}

// Evaluates the [K/L] rational with direct convolutions of x^k, following the
// layer definition term by term.
TensorD rational_oracle(PaLaConv<double>& layer, const TensorD& x) {
  const auto d = layer.degree();
  const std::size_t stride = layer.spec().stride;
  const auto pad = layer.spec().padding;
  auto conv_pow = [&](const TensorD& w, int k) {
    return oracle::conv(oracle::map(x, [k](double v) { return std::pow(v, k); }), w, nullptr, stride, pad);
  };
  const std::size_t ks = layer.spec().kernel, co = layer.spec().out_channels;
  const auto base = oracle::conv(x, TensorD(Shape{co, x.dim(1), ks, ks}), nullptr, stride, pad);
  const TensorD& a0 = layer.bias().value;
  std::vector<TensorD> P, Q;
  {
    TensorD p0(base.shape());
    for (std::size_t n = 0; n < p0.dim(0); ++n)
      for (std::size_t c = 0; c < p0.dim(1); ++c)
        for (std::size_t i = 0; i < p0.dim(2) * p0.dim(3); ++i)
          p0[(n * p0.dim(1) + c) * p0.dim(2) * p0.dim(3) + i] = a0[c];
    P.push_back(p0);
    Q.push_back(TensorD(base.shape(), 1.0));
  }
  for (int k = 1; k <= d.K; ++k)
    P.push_back(oracle::zip(P.back(), conv_pow(layer.numerator(k).value, k), std::plus<>()));
  for (int k = 1; k <= d.L; ++k)
    Q.push_back(oracle::zip(Q.back(), conv_pow(layer.denominator(k).value, k), std::plus<>()));
  if (d.L == 0) return P[d.K];
  if (layer.form() == PaonForm::Vanilla) return oracle::zip(P[d.K], Q[d.L], std::divides<>());
  TensorD out(base.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double pk = P[d.K][i], pk1 = d.K >= 1 ? P[d.K - 1][i] : 0.0;
    const double ql = Q[d.L][i], ql1 = Q[d.L - 1][i];
    out[i] = (ql * pk + ql1 * pk1) / (ql * ql + ql1 * ql1);
  }
  return out;
}

TensorD forward(PaLaConv<double>& layer, const TensorD& x, SingularityLog* log = nullptr) {
  Tape<double> tape;
  ForwardContext<double> ctx{tape, true, log};
  return layer.forward(ctx, tape.constant(x)).value();
}

}  // namespace

TEST(PaonDegree, Validation) {
  EXPECT_NO_THROW((PaonDegree{1, 0}.validate(true)));
  EXPECT_NO_THROW((PaonDegree{3, 0}.validate(true)));
  EXPECT_NO_THROW((PaonDegree{2, 1}.validate(true)));
  EXPECT_THROW((PaonDegree{3, 1}.validate(true)), Error);
  EXPECT_NO_THROW((PaonDegree{3, 1}.validate(false)));
  EXPECT_THROW((PaonDegree{0, 0}.validate(false)), Error);
  EXPECT_THROW((PaonDegree{-1, 2}.validate(false)), Error);
  EXPECT_EQ((PaonDegree{2, 1}.str()), "[2/1]");
}

TEST(PaLaConv, MatchesRationalOracleForEveryFormAndDegree) {
  Rng rng(11);
  const auto x = oracle::random_tensor({2, 3, 6, 5}, rng);
  for (auto form : {PaonForm::Vanilla, PaonForm::Smoothed}) {
    for (PaonDegree d : {PaonDegree{1, 0}, PaonDegree{2, 0}, PaonDegree{3, 0}, PaonDegree{1, 1},
                         PaonDegree{2, 1}, PaonDegree{1, 2}, PaonDegree{2, 2}, PaonDegree{0, 1}}) {
      for (std::size_t stride : {1u, 2u}) {
        PaLaConv<double> layer("l", d, ConvSpec{3, 4, 3, stride}, form);
        randomize(layer.parameters(), rng, 0.3);
        auto got = forward(layer, x);
        auto want = rational_oracle(layer, x);
        ASSERT_EQ(got.shape(), want.shape());
        for (std::size_t i = 0; i < got.size(); ++i)
          ASSERT_NEAR(got[i], want[i], 1e-12 * std::max(1.0, std::abs(want[i])))
              << d.str() << " form " << int(form) << " stride " << stride;
      }
    }
  }
}

TEST(PaLaConv, InitLeavesOnlyLinearNumeratorNonZero) {
  PaLaConv<double> layer("l", {2, 2}, ConvSpec{4, 3, 3}, PaonForm::Smoothed);
  layer.init(5);
  const double bound = std::sqrt(1.0 / (4 * 9));
  double max_abs = 0;
  for (double v : layer.numerator(1).value.values()) max_abs = std::max(max_abs, std::abs(v));
  EXPECT_GT(max_abs, 0.5 * bound);
  EXPECT_LE(max_abs, bound);
  for (auto* p : {&layer.numerator(2), &layer.denominator(1), &layer.denominator(2), &layer.bias()})
    for (double v : p->value.values()) EXPECT_EQ(v, 0.0);
}

TEST(PaLaConv, InitGainScalesHigherOrderWeights) {
  PaLaConv<double> layer("l", {2, 2}, ConvSpec{4, 3, 3}, PaonForm::Smoothed);
  layer.set_init_gain(0.25);
  layer.init(5);
  const double bound = 0.25 * std::sqrt(1.0 / (4 * 9));
  for (auto* p : {&layer.numerator(2), &layer.denominator(1), &layer.denominator(2)}) {
    double max_abs = 0;
    for (double v : p->value.values()) max_abs = std::max(max_abs, std::abs(v));
    EXPECT_GT(max_abs, 0.5 * bound) << p->name;
    EXPECT_LE(max_abs, bound) << p->name;
  }
  for (double v : layer.bias().value.values()) EXPECT_EQ(v, 0.0);

  PaLaDense<double> dense("d", {1, 1}, 16, 4, PaonForm::Smoothed);
  dense.set_init_gain(0.5);
  dense.init(6);
  double max_abs = 0;
  for (double v : dense.denominator(1).value.values()) max_abs = std::max(max_abs, std::abs(v));
  EXPECT_GT(max_abs, 0.25 * 0.25);
  EXPECT_LE(max_abs, 0.5 * 0.25);
}

TEST(PaLaConv, ParameterCountFormula) {
  for (PaonDegree d : {PaonDegree{1, 0}, PaonDegree{1, 1}, PaonDegree{2, 1}, PaonDegree{2, 2}}) {
    PaLaConv<float> layer("l", d, ConvSpec{5, 7, 3}, PaonForm::Smoothed);
    const std::size_t want = std::size_t(d.K + d.L) * 7 * 5 * 9 + 7;
    EXPECT_EQ(layer.parameter_count(), want);
    EXPECT_EQ(count_parameters(layer.parameters()), want);
  }
}

TEST(PaLaConv, OpCountsForThreeChannelFiveByFive) {
  const Shape in{1, 3, 256, 256};
  Conv2d<float> classic("c", ConvSpec{3, 3, 5});
  EXPECT_EQ(classic.count_ops(in).macs(), 14745600u);
  PaLaConv<float> paon("p", {1, 1}, ConvSpec{3, 3, 5}, PaonForm::Smoothed);
  const auto ops = paon.count_ops(in);
  EXPECT_EQ(ops.macs(), 29491200u);
  EXPECT_EQ(ops.flops(), 2u * 29491200u);
  EXPECT_EQ(ops.divisions, 3u * 256 * 256);
  EXPECT_EQ(ops.aux_tensor_ops, 4u * 3 * 256 * 256);
  PaLaConv<float> vanilla("v", {1, 1}, ConvSpec{3, 3, 5}, PaonForm::Vanilla);
  EXPECT_EQ(vanilla.count_ops(in).aux_tensor_ops, 0u);
  PaLaConv<float> poly("q", {2, 0}, ConvSpec{3, 3, 5}, PaonForm::Smoothed);
  EXPECT_EQ(poly.count_ops(in).divisions, 0u);
}

TEST(PaLaConv, OpCountsIncludeShifter) {
  const Shape in{1, 3, 8, 8};
  PaLaConv<float> p("p", {1, 1}, ConvSpec{3, 3, 3}, PaonForm::Smoothed,
                    ShifterConfig{ShifterKind::ElementWise, 0, 3});
  const auto ops = p.count_ops(in);
  EXPECT_EQ(ops.shifter_mults, 2u * 3 * 9 * 8 * 8 * 3);
  EXPECT_EQ(ops.shifter_interp_ops, 4u * 8 * 8 * 3);
  EXPECT_EQ(ops.multiplications, 2u * 3 * 9 * 8 * 8 * 3);
}

TEST(PaLaConv, LinearDegreeEqualsPlainConvolution) {
  Rng rng(12);
  const auto x = oracle::random_tensor({2, 3, 5, 5}, rng);
  PaLaConv<double> layer("l", {1, 0}, ConvSpec{3, 2, 3}, PaonForm::Smoothed);
  randomize(layer.parameters(), rng);
  auto got = forward(layer, x);
  auto want = kernels::conv2d(x, layer.numerator(1).value, &layer.bias().value, layer.spec());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-14);
}

TEST(PaLaConv, SmoothedDenominatorNeverBelowOne) {
  // With L = 1, Q_0 = 1 so the denominator is Q_1^2 + 1.
  Rng rng(13);
  SingularityLog log(1.0);
  PaLaConv<double> layer("l", {1, 1}, ConvSpec{2, 2, 3}, PaonForm::Smoothed);
  for (int trial = 0; trial < 20; ++trial) {
    randomize(layer.parameters(), rng, 5.0);
    forward(layer, oracle::random_tensor({1, 2, 4, 4}, rng, -5, 5), &log);
  }
  EXPECT_EQ(log.total(), 0u);
}

TEST(PaLaConv, VanillaCountsNearSingularDenominators) {
  SingularityLog log(0.01);
  PaLaConv<double> layer("v", {1, 1}, ConvSpec{1, 1, 1}, PaonForm::Vanilla);
  layer.numerator(1).value[0] = 1.0;
  layer.denominator(1).value[0] = -1.0;  // Q = 1 - x
  TensorD x(Shape{1, 1, 1, 4}, std::vector<double>{1.0, 0.995, 0.5, 1.02});
  auto y = forward(layer, x, &log);
  ASSERT_EQ(log.layers(), std::vector<std::string>{"v"});
  EXPECT_EQ(log.counts()[0], 2u);     // |1 - 1| and |1 - 0.995|
  EXPECT_EQ(log.clamp_events(), 1u);  // only the exact zero hits the clamp
  EXPECT_TRUE(std::isfinite(y[0]));
  EXPECT_NEAR(y[2], 0.5 / 0.5, 1e-15);
}

TEST(PaLaConv, GradientsMatchFiniteDifferences) {
  Rng rng(14);
  auto xin = Parameter<double>("x", oracle::random_tensor({1, 2, 4, 4}, rng));
  for (auto form : {PaonForm::Vanilla, PaonForm::Smoothed}) {
    for (PaonDegree d : {PaonDegree{2, 1}, PaonDegree{2, 2}}) {
      PaLaConv<double> layer("l", d, ConvSpec{2, 2, 3}, form);
      randomize(layer.parameters(), rng, 0.2);
      auto params = layer.parameters();
      params.push_back(&xin);
      auto f = [&](Tape<double>& t) {
        ForwardContext<double> ctx{t, true, nullptr};
        return ops::mean(ops::pow(layer.forward(ctx, t.param(xin)), 2));
      };
      auto r = grad_check(f, params, 1e-5);
      EXPECT_TRUE(r.pass) << d.str() << " " << r.max_rel_err << " " << r.worst_location;
    }
  }
}

TEST(PaLaDense, MatchesScalarOracle) {
  Rng rng(15);
  PaLaDense<double> layer("d", {2, 1}, 3, 2, PaonForm::Smoothed);
  randomize(layer.parameters(), rng);
  TensorD x = oracle::random_tensor({4, 3}, rng);
  Tape<double> tape;
  ForwardContext<double> ctx{tape, false, nullptr};
  auto y = layer.forward(ctx, tape.constant(x)).value();
  for (std::size_t n = 0; n < 4; ++n)
    for (std::size_t o = 0; o < 2; ++o) {
      double p1 = layer.bias().value[o], q1 = 1.0, a2 = 0.0;
      for (std::size_t i = 0; i < 3; ++i) {
        const double v = x[n * 3 + i];
        p1 += layer.numerator(1).value[o * 3 + i] * v;
        a2 += layer.numerator(2).value[o * 3 + i] * v * v;
        q1 += layer.denominator(1).value[o * 3 + i] * v;
      }
      const double p2 = p1 + a2;
      EXPECT_NEAR(y[n * 2 + o], (q1 * p2 + p1) / (q1 * q1 + 1.0), 1e-14);
    }
  EXPECT_EQ(layer.parameter_count(), 3u * 3 * 2 + 2);
}

TEST(ReduceConfig, ClassicFamilies) {
  const ShifterConfig off{ShifterKind::KernelWise, -1};
  const ShifterConfig on{ShifterKind::ElementWise, 0, 1};
  EXPECT_EQ(reduce_config({1, 0}, std::nullopt), NeuronFamily::Ordinary);
  EXPECT_EQ(reduce_config({1, 0}, off), NeuronFamily::Ordinary);
  EXPECT_EQ(reduce_config({2, 0}, std::nullopt), NeuronFamily::Quadratic);
  EXPECT_EQ(reduce_config({3, 0}, std::nullopt), NeuronFamily::Generative);
  EXPECT_EQ(reduce_config({3, 0}, on), NeuronFamily::Super);
  EXPECT_EQ(reduce_config({1, 1}, std::nullopt), NeuronFamily::Pade);
  EXPECT_EQ(to_string(NeuronFamily::Super), "Super");
}
