#pragma once

// Reference architectures: a residual super-resolution network and a
// three-stage residual classifier, each buildable from classic or Padé layers.

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "paon/layers.hpp"

namespace paon {

enum class Activation { None, ReLU, GELU };
enum class LayerFamily { Classic, Vanilla, Smoothed };

Activation parse_activation(const std::string& s);
LayerFamily parse_family(const std::string& s);
std::string to_string(Activation a);
std::string to_string(LayerFamily f);

template <typename T>
Var<T> activate(Activation a, const Var<T>& x);

/// Neuron model of a layer. Classic layers ignore degree and shifter.
struct NeuronSpec {
  LayerFamily family = LayerFamily::Smoothed;
  PaonDegree degree{1, 1};
  std::optional<ShifterConfig> shifter;
  double init_gain = 0.0;  // see PaLaConv::init
};

template <typename T>
std::unique_ptr<ConvLayer<T>> make_conv_layer(const std::string& name, const NeuronSpec& neuron,
                                              const ConvSpec& spec, bool classic_bias = true);

/// Parameters and buffers addressed by graph path.
template <typename T>
using NamedTensors = std::vector<std::pair<std::string, Tensor<T>*>>;

// ---- Super-resolution network ---------------------------------------------

struct SrNetConfig {
  std::size_t channels = 16;
  std::size_t blocks = 2;
  std::size_t width = 1;  // hidden width multiplier inside a block (1: RB, > 1: WRB)
  std::size_t scale = 2;  // 2 or 4
  std::size_t kernel = 3;
  NeuronSpec body;        // refinement layers
  Activation block_activation = Activation::None;
  Activation upsampler_activation = Activation::GELU;
  bool shared_upsampler = false;
  double residual_init = 0.1;
};

/// Padé refinement blocks without any activation.
SrNetConfig padenet_id_config(std::size_t channels, std::size_t blocks, PaonDegree degree = {1, 1});
/// Classic wide residual blocks with GELU.
SrNetConfig resnet_gelu_config(std::size_t channels, std::size_t blocks, std::size_t width = 2);

template <typename T>
class SrNet {
 public:
  SrNet(SrNetConfig cfg, std::uint64_t seed);

  /// (N, 3, h, w) -> (N, 3, scale h, scale w).
  Var<T> forward(ForwardContext<T>& ctx, const Var<T>& x);
  ParamList<T> parameters();
  [[nodiscard]] std::size_t parameter_count();
  [[nodiscard]] OpCountReport count_ops(const Shape& in) const;
  NamedTensors<T> state();
  [[nodiscard]] const SrNetConfig& config() const { return cfg_; }

  /// Residual scale of block i (C values).
  Parameter<T>& residual_scale(std::size_t i) { return blocks_.at(i).scale; }

 private:
  struct Block {
    std::unique_ptr<ConvLayer<T>> first, second;
    Parameter<T> scale;
  };
  SrNetConfig cfg_;
  std::unique_ptr<ConvLayer<T>> head_, body_end_, tail_;
  std::vector<Block> blocks_;
  std::vector<std::unique_ptr<ConvLayer<T>>> upsamplers_;
  std::size_t stages_;
};

// ---- Classifier --------------------------------------------------------------

struct ClsNetConfig {
  std::array<std::size_t, 3> stages{2, 2, 2};
  std::array<std::size_t, 3> widths{16, 32, 64};
  NeuronSpec neuron{LayerFamily::Classic, {1, 0}, std::nullopt};
  bool pade_head = false;
  PaonDegree head_degree{1, 1};
  std::size_t classes = 10;
  std::size_t in_channels = 3;
};

template <typename T>
class ClsNet {
 public:
  ClsNet(ClsNetConfig cfg, std::uint64_t seed);

  /// (N, 3, H, W) -> logits (N, classes).
  Var<T> forward(ForwardContext<T>& ctx, const Var<T>& x);
  ParamList<T> parameters();
  [[nodiscard]] std::size_t parameter_count();
  /// Weighted layers on the main path: stem, two per block and the head.
  [[nodiscard]] std::size_t layer_count() const;
  [[nodiscard]] OpCountReport count_ops(const Shape& in) const;
  NamedTensors<T> state();
  [[nodiscard]] const ClsNetConfig& config() const { return cfg_; }

 private:
  struct Block {
    std::unique_ptr<ConvLayer<T>> conv1, conv2, shortcut;
    std::unique_ptr<BatchNorm2d<T>> bn1, bn2, bn_shortcut;
  };
  [[nodiscard]] bool classic() const { return cfg_.neuron.family == LayerFamily::Classic; }
  ClsNetConfig cfg_;
  std::unique_ptr<ConvLayer<T>> stem_;
  std::unique_ptr<BatchNorm2d<T>> stem_bn_;
  std::vector<Block> blocks_;
  std::unique_ptr<Linear<T>> linear_head_;
  std::unique_ptr<PaLaDense<T>> pade_head_;
};

// ---- Checkpoints -------------------------------------------------------------

/// Writes manifest.txt (the given key=value lines) and one <path>.tnsr file
/// per named tensor into dir.
template <typename T>
void save_checkpoint(const std::filesystem::path& dir, const std::string& manifest,
                     const NamedTensors<T>& state);
/// Restores every named tensor from dir; shapes must match.
template <typename T>
void load_checkpoint(const std::filesystem::path& dir, const NamedTensors<T>& state);

/// Copies current values so they can be restored later (best-model retention).
template <typename T>
std::vector<Tensor<T>> snapshot(const NamedTensors<T>& state);
template <typename T>
void restore(const NamedTensors<T>& state, const std::vector<Tensor<T>>& values);

}  // namespace paon
