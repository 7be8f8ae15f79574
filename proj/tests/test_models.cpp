#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "paon/models.hpp"
#include "paon/random.hpp"

using namespace paon;

namespace {

TensorF random_batch(Shape s, std::uint64_t seed) {
  Rng rng(seed);
  TensorF t(std::move(s));
  for (auto& v : t.values()) v = static_cast<float>(rng.uniform(-1, 1));
  return t;
}

template <typename Net>
TensorF run(Net& net, const TensorF& x, bool training = false, SingularityLog* log = nullptr) {
  Tape<float> tape;
  ForwardContext<float> ctx{tape, training, log};
  return net.forward(ctx, tape.constant(x)).value();
}

}  // namespace

TEST(SrNet, OutputShapeForBothScales) {
  for (std::size_t scale : {2u, 4u}) {
    auto cfg = padenet_id_config(8, 2);
    cfg.scale = scale;
    SrNet<float> net(cfg, 1);
    const auto y = run(net, random_batch({2, 3, 5, 7}, 2));
    EXPECT_EQ(y.shape(), (Shape{2, 3, 5 * scale, 7 * scale}));
  }
  auto bad = padenet_id_config(8, 2);
  bad.scale = 3;
  EXPECT_THROW(SrNet<float>(bad, 1), Error);
}

TEST(SrNet, SameSeedSameOutput) {
  SrNet<float> a(resnet_gelu_config(8, 2), 7), b(resnet_gelu_config(8, 2), 7), c(resnet_gelu_config(8, 2), 8);
  const auto x = random_batch({1, 3, 6, 6}, 3);
  EXPECT_EQ(run(a, x), run(b, x));
  EXPECT_NE(run(a, x), run(c, x));
}

TEST(SrNet, ZeroResidualScalesBypassBlocks) {
  // With every block scale at zero the output no longer depends on block weights.
  SrNet<float> net(padenet_id_config(8, 3), 4);
  for (std::size_t i = 0; i < 3; ++i) net.residual_scale(i).value.fill(0.0f);
  const auto x = random_batch({1, 3, 6, 6}, 5);
  const auto before = run(net, x);
  for (auto* p : net.parameters())
    if (p->name.find("block") != std::string::npos && p->name.find("scale") == std::string::npos)
      for (auto& v : p->value.values()) v += 0.5f;
  EXPECT_EQ(run(net, x), before);
}

TEST(SrNet, SharedUpsamplerSavesOneStage) {
  auto cfg = resnet_gelu_config(8, 1);
  cfg.scale = 4;
  SrNet<float> separate(cfg, 1);
  cfg.shared_upsampler = true;
  SrNet<float> shared(cfg, 1);
  // One upsampler stage: conv C -> 4C with k = 3 and bias.
  EXPECT_EQ(separate.parameter_count() - shared.parameter_count(), 8u * 32 * 9 + 32);
}

TEST(SrNet, PolynomialDegreeOneMatchesClassicParameterCount) {
  auto pade = resnet_gelu_config(8, 2, 2);
  pade.body = NeuronSpec{LayerFamily::Smoothed, {1, 0}, std::nullopt};
  SrNet<float> a(pade, 1), b(resnet_gelu_config(8, 2, 2), 1);
  EXPECT_EQ(a.parameter_count(), b.parameter_count());
}

TEST(SrNet, ReferenceScaleParameterBudgets) {
  // 48 channels, three blocks, x4: classic width-2 blocks against Padé [1/1] blocks.
  auto classic = resnet_gelu_config(48, 3, 2);
  classic.scale = 4;
  auto pade = padenet_id_config(48, 3);
  pade.scale = 4;
  SrNet<float> c(classic, 1), p(pade, 1);
  EXPECT_NEAR(double(c.parameter_count()), 440e3, 0.02 * 440e3);
  EXPECT_NEAR(double(p.parameter_count()), 445e3, 0.02 * 445e3);
}

TEST(SrNet, SmoothedBodyHasNoSmallDenominators) {
  SrNet<float> net(padenet_id_config(8, 2), 9);
  for (auto* p : net.parameters())
    for (auto& v : p->value.values()) v += 0.3f;  // move away from the zero init
  SingularityLog log(1.0);
  run(net, random_batch({2, 3, 8, 8}, 10), true, &log);
  EXPECT_EQ(log.layers().size(), 4u);
  EXPECT_EQ(log.total(), 0u);
}

TEST(SrNet, OpCountIsSumOfLayers) {
  SrNet<float> net(padenet_id_config(8, 2), 1);
  const auto report = net.count_ops({1, 3, 16, 16});
  std::uint64_t sum = 0;
  for (const auto& l : report.layers) sum += l.multiplications;
  EXPECT_EQ(report.totals().multiplications, sum);
  // A smoothed [1/1] body layer costs twice the classic 8 -> 8 conv.
  const std::uint64_t classic = 8ull * 9 * 16 * 16 * 8;
  bool found = false;
  for (const auto& l : report.layers)
    if (l.layer.find("blocks.0") != std::string::npos) {
      EXPECT_EQ(l.multiplications, 2 * classic) << l.layer;
      found = true;
    }
  EXPECT_TRUE(found);
}

TEST(ClsNet, LayerCountsAndLogits) {
  ClsNetConfig deep;
  deep.stages = {3, 3, 3};
  EXPECT_EQ(ClsNet<float>(deep, 1).layer_count(), 20u);
  ClsNetConfig resnet;
  EXPECT_EQ(ClsNet<float>(resnet, 1).layer_count(), 14u);
  ClsNetConfig paon;
  paon.stages = {1, 1, 2};
  paon.neuron = NeuronSpec{LayerFamily::Smoothed, {1, 1}, std::nullopt};
  paon.pade_head = true;
  ClsNet<float> net(paon, 2);
  EXPECT_EQ(net.layer_count(), 10u);
  const auto logits = run(net, random_batch({4, 3, 16, 16}, 3), true);
  EXPECT_EQ(logits.shape(), (Shape{4, 10}));
  for (float v : logits.values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(ClsNet, ShiftersOnlyInsideBlocks) {
  ClsNetConfig cfg;
  cfg.stages = {1, 1, 2};
  cfg.neuron = NeuronSpec{LayerFamily::Smoothed, {1, 1}, ShifterConfig{ShifterKind::ElementWise, 0, 1}};
  ClsNet<float> net(cfg, 1);
  std::size_t shifters = 0;
  for (auto* p : net.parameters()) {
    if (p->name.find(".shifter.") == std::string::npos) continue;
    EXPECT_EQ(p->name.rfind("stage", 0), 0u) << p->name;
    EXPECT_EQ(p->name.find("shortcut"), std::string::npos) << p->name;
    ++shifters;
  }
  EXPECT_EQ(shifters, 2u * 8);  // weight + bias for both convs of 4 blocks
  const auto logits = run(net, random_batch({2, 3, 16, 16}, 3), true);
  for (float v : logits.values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(ClsNet, CheckpointRoundTrip) {
  ClsNetConfig cfg;
  cfg.stages = {1, 1, 1};
  cfg.widths = {4, 8, 8};
  ClsNet<float> a(cfg, 1), b(cfg, 2);
  const auto x = random_batch({2, 3, 8, 8}, 4);
  run(a, x, true);  // updates running statistics
  const auto dir = std::filesystem::temp_directory_path() / "paon_test_ckpt";
  std::filesystem::remove_all(dir);
  save_checkpoint(dir, "model=cls\n", a.state());
  EXPECT_TRUE(std::filesystem::exists(dir / "manifest.txt"));
  load_checkpoint(dir, b.state());
  EXPECT_EQ(run(a, x), run(b, x));

  auto snap = snapshot(a.state());
  for (auto* p : a.parameters()) p->value.fill(0.0f);
  restore(a.state(), snap);
  EXPECT_EQ(run(a, x), run(b, x));
}
