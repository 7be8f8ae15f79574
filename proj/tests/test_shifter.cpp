#include <gtest/gtest.h>

#include <cmath>

#include "paon/gradcheck.hpp"
#include "paon/layers.hpp"
#include "support/oracles.hpp"

using namespace paon;

namespace {

const ShifterConfig kConfigs[] = {
    {ShifterKind::KernelWise, -1, 1}, {ShifterKind::KernelWise, 0, 1},
    {ShifterKind::KernelWise, 2, 1},  {ShifterKind::ElementWise, 0, 1},
    {ShifterKind::ElementWise, 0, 3}, {ShifterKind::ElementWise, 3, 3},
};

}  // namespace

TEST(Shifter, OffsetLimit) {
  EXPECT_DOUBLE_EQ(offset_limit(0, 24, 12), 6.0);
  EXPECT_DOUBLE_EQ(offset_limit(-1, 7, 9), 2.25);
  EXPECT_DOUBLE_EQ(offset_limit(3, 100, 100), 3.0);
}

TEST(Shifter, LimitIsStrictEvenWhenTanhSaturates) {
  TensorF raw(Shape{4}, std::vector<float>{1e6f, -1e6f, 0.0f, 0.5f});
  auto o = limit_offsets(raw, 2.0);
  EXPECT_LT(o[0], 2.0f);
  EXPECT_GT(o[1], -2.0f);
  EXPECT_EQ(o[2], 0.0f);
  EXPECT_NEAR(o[3], 2.0 * std::tanh(0.25), 1e-7);
}

TEST(Shifter, ParameterShapes) {
  Shifter<float> ew("s", {ShifterKind::ElementWise, 0, 3}, 4);
  EXPECT_EQ(ew.weight().value.shape(), (Shape{8, 4, 3, 3}));
  EXPECT_EQ(ew.bias().value.shape(), (Shape{8}));
  Shifter<float> kw0("s", {ShifterKind::KernelWise, 0, 1}, 4);
  EXPECT_EQ(kw0.weight().value.shape(), (Shape{8, 4}));
  Shifter<float> kwb("s", {ShifterKind::KernelWise, 2, 1}, 4);
  EXPECT_EQ(kwb.parameters().size(), 1u);
  Shifter<float> off("s", {ShifterKind::KernelWise, -1, 1}, 4);
  EXPECT_TRUE(off.parameters().empty());
  EXPECT_FALSE(off.active());
  EXPECT_THROW(Shifter<float>("s", {ShifterKind::ElementWise, 0, 2}, 4), Error);
}

TEST(Shifter, ZeroInitializedShifterIsIdentity) {
  Rng rng(21);
  auto x = oracle::random_tensor({2, 3, 5, 7}, rng).cast<float>();
  for (const auto& cfg : kConfigs) {
    Shifter<float> s("s", cfg, 3);
    Tape<float> tape;
    ForwardContext<float> ctx{tape, true, nullptr};
    EXPECT_EQ(s.forward(ctx, tape.constant(x)).value(), x);
  }
}

TEST(Shifter, KernelWiseFixedShiftMovesWholeChannel) {
  Shifter<double> s("s", {ShifterKind::KernelWise, 4, 1}, 1);
  // raw such that 4 * tanh(raw / 4) == 1 exactly enough for an integer shift.
  s.weight().value[0] = 4.0 * std::atanh(0.25);  // dx = 1
  s.weight().value[1] = 0.0;
  TensorD x(Shape{1, 1, 2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  Tape<double> tape;
  ForwardContext<double> ctx{tape, true, nullptr};
  auto y = s.forward(ctx, tape.constant(x)).value();
  const std::vector<double> want{2, 3, 3, 5, 6, 6};
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(y[i], want[i], 1e-12);
}

TEST(Shifter, OffsetsStayInsideBoundForLargeHeads) {
  Rng rng(22);
  for (const auto& cfg : kConfigs) {
    Shifter<double> s("s", cfg, 2);
    for (auto* p : s.parameters())
      for (auto& v : p->value.values()) v = rng.uniform(-50, 50);
    Tape<double> tape;
    ForwardContext<double> ctx{tape, true, nullptr};
    auto off = s.offsets(ctx, tape.constant(oracle::random_tensor({1, 2, 8, 6}, rng, -3, 3))).value();
    const double m = offset_limit(cfg.b, 8, 6);
    for (double v : off.values()) EXPECT_LT(std::abs(v), m);
  }
}

TEST(Shifter, GradientsMatchFiniteDifferences) {
  Rng rng(23);
  auto x = Parameter<double>("x", oracle::random_tensor({2, 2, 5, 4}, rng));
  for (const auto& cfg : kConfigs) {
    PaLaConv<double> layer("l", {1, 1}, ConvSpec{2, 2, 3}, PaonForm::Smoothed, cfg);
    for (auto* p : layer.parameters())
      for (auto& v : p->value.values()) v = rng.uniform(-0.3, 0.3);
    auto params = layer.parameters();
    params.push_back(&x);
    auto f = [&](Tape<double>& t) {
      ForwardContext<double> ctx{t, true, nullptr};
      return ops::mean(ops::pow(layer.forward(ctx, t.param(x)), 2));
    };
    auto r = grad_check(f, params, 1e-4);
    EXPECT_TRUE(r.pass) << int(cfg.kind) << " b=" << cfg.b << " " << r.max_rel_err << " "
                        << r.worst_location;
  }
}
