#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "paon/layers.hpp"
#include "paon/nn_ops.hpp"
#include "paon/training.hpp"

using namespace paon;

namespace {

std::vector<double> values_of(const Parameter<double>& p) {
  return {p.value.values().begin(), p.value.values().end()};
}

TensorF ramp(std::size_t c, std::size_t h, std::size_t w) {
  TensorF t(Shape{c, h, w});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(i) * 0.01f;
  return t;
}

}  // namespace

TEST(Barron, HandComputedValues) {
  // |a-2|/a * (((d/c)^2/|a-2| + 1)^(a/2) - 1)
  EXPECT_NEAR(ops::barron_rho(2.0, 1.5, 2.0), (std::pow(3.0, 0.75) - 1.0) / 3.0, 1e-12);
  EXPECT_NEAR(ops::barron_rho(2.0, 1.5, 2.0), 0.4265, 1e-4);
  EXPECT_DOUBLE_EQ(ops::barron_rho(3.0, 2.0, 1.5), 0.5 * 4.0);
  // Both sides of alpha = 2 approach the quadratic limit (slope in alpha is about 2).
  const double above = ops::barron_rho(1.0, 2.0 + 1e-4, 1.0), below = ops::barron_rho(1.0, 2.0 - 1e-4, 1.0);
  EXPECT_NEAR(above, 0.5, 5e-4);
  EXPECT_NEAR(below, 0.5, 5e-4);
  EXPECT_NEAR((above + below) / 2, 0.5, 1e-6);
  EXPECT_NEAR(ops::barron_rho(0.5 * std::sqrt(2.0 * (std::exp(1.0) - 1.0)), 0.0, 0.5), 1.0, 1e-12);
}

TEST(Barron, LossIsMeanOfRho) {
  Tape<double> tape;
  auto p = tape.constant(TensorD(Shape{3}, std::vector<double>{0.5, -1.0, 2.0}));
  auto t = tape.constant(TensorD(Shape{3}, std::vector<double>{0.0, 0.0, 0.0}));
  const double expect = (ops::barron_rho(0.5, 1.5, 0.3) + ops::barron_rho(-1.0, 1.5, 0.3) + ops::barron_rho(2.0, 1.5, 0.3)) / 3;
  EXPECT_NEAR(ops::barron_loss(p, t, 1.5, 0.3).value().item(), expect, 1e-14);
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  Parameter<double> p("p", TensorD(Shape{3}, std::vector<double>{1.0, -2.0, 0.5}));
  p.grad = TensorD(Shape{3}, std::vector<double>{0.3, -7.0, 1e-3});
  AdamW<double> opt({&p}, AdamWConfig{});
  ASSERT_TRUE(opt.step(0.01));
  // m_hat = g, v_hat = g^2: the update is lr * g / (|g| + eps)
  EXPECT_NEAR(p.value[0], 1.0 - 0.01 * 0.3 / (0.3 + 1e-8), 1e-15);
  EXPECT_NEAR(p.value[1], -2.0 + 0.01 * 7.0 / (7.0 + 1e-8), 1e-15);
  EXPECT_NEAR(p.value[2], 0.5 - 0.01 * 1e-3 / (1e-3 + 1e-8), 1e-15);
}

TEST(AdamW, ZeroGradientWithDecayShrinksWeights) {
  Parameter<double> p("p", TensorD(Shape{2}, std::vector<double>{4.0, -1.0}));
  AdamW<double> opt({&p}, AdamWConfig{0.9, 0.999, 1e-8, 0.1});
  opt.step(0.5);
  EXPECT_DOUBLE_EQ(p.value[0], 4.0 * (1 - 0.5 * 0.1));
  EXPECT_DOUBLE_EQ(p.value[1], -1.0 * (1 - 0.5 * 0.1));
  Parameter<double> q("q", TensorD(Shape{2}, std::vector<double>{4.0, -1.0}));
  AdamW<double> still({&q}, AdamWConfig{});
  still.step(0.5);
  EXPECT_EQ(values_of(q), (std::vector<double>{4.0, -1.0}));
}

TEST(AdamW, NonFiniteGradientSkipsStep) {
  Parameter<double> p("p", TensorD(Shape{2}, std::vector<double>{1.0, 2.0}));
  p.grad[1] = std::numeric_limits<double>::quiet_NaN();
  AdamW<double> opt({&p}, AdamWConfig{0.9, 0.999, 1e-8, 0.1});
  EXPECT_FALSE(opt.step(0.1));
  EXPECT_EQ(opt.skipped(), 1u);
  EXPECT_EQ(values_of(p), (std::vector<double>{1.0, 2.0}));
}

TEST(Schedule, CosineEndpointsAndMidpoint) {
  EXPECT_DOUBLE_EQ(cosine_lr(0, 100, 1e-3, 1e-6), 1e-3);
  EXPECT_NEAR(cosine_lr(100, 100, 1e-3, 1e-6), 1e-6, 1e-18);
  EXPECT_NEAR(cosine_lr(50, 100, 1e-3, 1e-6), (1e-3 + 1e-6) / 2, 1e-15);
  EXPECT_NEAR(cosine_lr(25, 100, 1.0, 0.0), (1 + std::cos(std::numbers::pi / 4)) / 2, 1e-15);
  EXPECT_THROW(cosine_lr(0, 0, 1, 0), Error);
  EXPECT_THROW(cosine_lr(101, 100, 1, 0), Error);
}

TEST(Clip, ScalesToMaxNorm) {
  Parameter<double> a("a", TensorD(Shape{1})), b("b", TensorD(Shape{1}));
  a.grad[0] = 3;
  b.grad[0] = 4;
  EXPECT_DOUBLE_EQ(clip_grad_norm<double>({&a, &b}, 1.0), 5.0);
  EXPECT_NEAR(a.grad[0], 0.6, 1e-15);
  EXPECT_NEAR(b.grad[0], 0.8, 1e-15);
  EXPECT_NEAR(clip_grad_norm<double>({&a, &b}, 2.0), 1.0, 1e-15);
  EXPECT_NEAR(a.grad[0], 0.6, 1e-15);  // below the limit: unchanged
}

TEST(Augment, GeometricIdentities) {
  const auto img = ramp(2, 3, 4);
  EXPECT_EQ(flip_horizontal(flip_horizontal(img)), img);
  EXPECT_EQ(flip_vertical(flip_vertical(img)), img);
  auto r = img;
  for (int i = 0; i < 4; ++i) r = rotate90(r);
  EXPECT_EQ(r, img);
  const auto rot = rotate90(img);
  ASSERT_EQ(rot.shape(), (Shape{2, 4, 3}));
  // Counter-clockwise: the top-right corner moves to the top-left.
  // (c, y, x) with width 4 for img and 3 for rot
  EXPECT_EQ(rot[0], img[3]);
  EXPECT_EQ(flip_horizontal(img)[12 + 8 + 0], img[12 + 8 + 3]);
  const auto sw = permute_channels(img, {1, 0});
  EXPECT_EQ(sw[5], img[12 + 5]);
}

TEST(Augment, PairStaysAligned) {
  // HR = nearest upsampling of LR; any shared geometry keeps the relation.
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    TensorF lr(Shape{3, 4, 4});
    for (auto& v : lr.values()) v = static_cast<float>(rng.uniform(-1, 1));
    TensorF hr(Shape{3, 8, 8});
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x) hr[(c * 8 + y) * 8 + x] = lr[(c * 4 + y / 2) * 4 + x / 2];
    augment_pair(lr, hr, AugmentConfig{}, rng);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x)
          ASSERT_EQ(hr[(c * 8 + y) * 8 + x], lr[(c * 4 + y / 2) * 4 + x / 2]);
  }
}

TEST(Augment, NoiseMatchesRequestedSnr) {
  TensorF img(Shape{3, 200, 200}, 0.5f);
  Rng rng(5);
  const double sigma2 = add_noise(img, 40.0, rng);
  EXPECT_NEAR(sigma2, 0.25 * 1e-4, 1e-12);
  double s = 0;
  for (float v : img.values()) s += (v - 0.5) * (v - 0.5);
  EXPECT_NEAR(s / double(img.size()) / sigma2, 1.0, 0.02);
}

TEST(RunLogCsv, HeaderAndEmptyMetric) {
  RunLog log;
  log.layers = {"l1", "l2"};
  log.records.push_back(RunRecord{1, 0.5, 0.25, std::numeric_limits<double>::quiet_NaN(), {0, 3}});
  log.records.push_back(RunRecord{2, 0.1, 0.125, 30.5, {1, 0}});
  EXPECT_EQ(log.csv(),
            "iter,lr,loss,metric,qzero_events_l1,qzero_events_l2\n"
            "1,0.5,0.25,,0,3\n"
            "2,0.1,0.125,30.5,1,0\n");
  EXPECT_EQ(std::stod(format_double(0.1 + 0.2)), 0.1 + 0.2);
}

namespace {

// One smoothed [1/1] layer fitting the output of a random teacher layer on a
// single fixed input.
struct OverfitSetup {
  PaLaConv<double> teacher{"teacher", {1, 1}, ConvSpec{2, 2, 3, 1, Padding::Replicate}, PaonForm::Smoothed};
  PaLaConv<double> student{"student", {1, 1}, ConvSpec{2, 2, 3, 1, Padding::Replicate}, PaonForm::Smoothed};
  TensorD x{Shape{1, 2, 6, 6}};
  TensorD y;

  OverfitSetup() {
    Rng rng(6);
    for (auto& v : x.values()) v = rng.uniform(-1, 1);
    teacher.init(1);
    for (auto& v : teacher.denominator(1).value.values()) v = rng.uniform(-0.3, 0.3);
    for (auto& v : teacher.bias().value.values()) v = rng.uniform(-0.3, 0.3);
    Tape<double> tape;
    ForwardContext<double> ctx{tape};
    y = teacher.forward(ctx, tape.constant(x)).value();
    student.init(2);
  }

  TrainTask<double> task() {
    TrainTask<double> t;
    t.params = student.parameters();
    t.loss = [this](Tape<double>& tape, SingularityLog* log, Rng&) {
      ForwardContext<double> ctx{tape, true, log};
      return ops::mse_loss(student.forward(ctx, tape.constant(x)), tape.constant(y));
    };
    return t;
  }
};

}  // namespace

TEST(TrainLoop, OverfitsSingleSample) {
  OverfitSetup s;
  auto task = s.task();
  TrainLoopConfig cfg;
  cfg.iterations = 2000;
  cfg.lr0 = 1e-2;
  cfg.lr_min = 1e-5;
  const auto log = train_loop(task, cfg);
  ASSERT_EQ(log.records.size(), 2000u);
  EXPECT_LT(log.records.back().loss, 1e-4);
  EXPECT_DOUBLE_EQ(log.records[0].lr, cosine_lr(0, 2000, 1e-2, 1e-5));
  EXPECT_DOUBLE_EQ(log.records.back().lr, cosine_lr(1999, 2000, 1e-2, 1e-5));
}

TEST(TrainLoop, DeterministicCsvAndEvents) {
  auto run = [] {
    OverfitSetup s;
    auto task = s.task();
    int calls = 0;
    task.evaluate = [&] { return double(++calls); };
    TrainLoopConfig cfg;
    cfg.iterations = 30;
    cfg.eval_every = 10;
    SingularityLog log(0.01);
    return train_loop(task, cfg, &log);
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.csv(), b.csv());
  EXPECT_EQ(a.layers, (std::vector<std::string>{"student"}));
  EXPECT_EQ(a.best_iter, 30u);
  EXPECT_TRUE(std::isnan(a.records[4].metric));
  EXPECT_EQ(a.records[9].metric, 1.0);
}

TEST(TrainLoop, NonFiniteLossAborts) {
  Parameter<double> p("p", TensorD(Shape{1}, 1.0));
  TrainTask<double> task;
  task.params = {&p};
  task.loss = [&](Tape<double>& tape, SingularityLog*, Rng&) {
    return ops::sum(ops::scale(tape.param(p), std::numeric_limits<double>::infinity()));
  };
  TrainLoopConfig cfg;
  cfg.iterations = 5;
  cfg.seed = 77;
  try {
    train_loop(task, cfg);
    FAIL() << "expected divergence";
  } catch (const TrainingDiverged& e) {
    EXPECT_EQ(e.iter, 1u);
    EXPECT_EQ(e.batch_seed, batch_seed(77, 1));
  }
}
