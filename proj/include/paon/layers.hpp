#pragma once

// Padé neuron layers (PaLa) and the classic layers they generalize.
//
// A Paon of order [K/L] computes
//   P_K = a0 + sum_{k=1..K} A_k * x^k,   Q_L = 1 + sum_{k=1..L} B_k * x^k
// where * is convolution (PaLaConv) or matrix product (PaLaDense).
//   vanilla:   P_K / Q_L
//   smoothed:  (Q_L P_K + Q_{L-1} P_{K-1}) / (Q_L^2 + Q_{L-1}^2)
// The lower-order polynomials are truncations sharing A_k, B_k and a0, with
// P_0 = a0, Q_0 = 1 and P_{-1} = 0. With L = 0 both forms are the polynomial P_K.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "paon/module.hpp"
#include "paon/nn_ops.hpp"
#include "paon/shifter.hpp"

namespace paon {

struct PaonDegree {
  int K = 1;
  int L = 1;

  /// Throws unless K, L >= 0 and K + L >= 1; smoothed layers additionally need
  /// |K - L| <= 1 or L == 0.
  void validate(bool smoothed) const;
  [[nodiscard]] std::string str() const;
  friend bool operator==(const PaonDegree&, const PaonDegree&) = default;
};

enum class PaonForm { Vanilla, Smoothed };

/// Denominator magnitude below which vanilla division is clamped.
inline constexpr double kDenominatorClamp = 1e-12;

enum class NeuronFamily { Ordinary, Quadratic, Generative, Super, Pade };

/// Which classic neuron model a Paon configuration reduces to.
NeuronFamily reduce_config(PaonDegree degree, const std::optional<ShifterConfig>& shifter);
std::string to_string(NeuronFamily f);

/// Common interface of the spatial layers a model can be assembled from.
template <typename T>
class ConvLayer {
 public:
  virtual ~ConvLayer() = default;
  virtual void init(std::uint64_t seed) = 0;
  virtual Var<T> forward(ForwardContext<T>& ctx, const Var<T>& x) = 0;
  virtual ParamList<T> parameters() = 0;
  [[nodiscard]] virtual LayerOps count_ops(const Shape& in, Shape* out = nullptr) const = 0;
};

/// Convolutional Padé layer (stride and padding from `spec`, replicate padding
/// by default).
template <typename T>
class PaLaConv final : public ConvLayer<T> {
 public:
  PaLaConv(std::string name, PaonDegree degree, ConvSpec spec, PaonForm form,
           std::optional<ShifterConfig> shifter = std::nullopt);

  /// A_1 ~ U(+-s), s = sqrt(1 / (C_i k^2)); A_k (k >= 2) and B_k ~ U(+-gain s), zero
  /// when gain is 0 (the default). a0 and the shifter head start at zero.
  void init(std::uint64_t seed) override;
  void set_init_gain(double gain) { init_gain_ = gain; }
  Var<T> forward(ForwardContext<T>& ctx, const Var<T>& x) override;

  ParamList<T> parameters() override;
  [[nodiscard]] std::size_t parameter_count() const;
  [[nodiscard]] LayerOps count_ops(const Shape& in, Shape* out = nullptr) const override;

  Parameter<T>& numerator(int k) { return numerator_.at(static_cast<std::size_t>(k - 1)); }
  Parameter<T>& denominator(int k) { return denominator_.at(static_cast<std::size_t>(k - 1)); }
  Parameter<T>& bias() { return bias_; }
  Shifter<T>* shifter() { return shifter_ ? shifter_.get() : nullptr; }

  [[nodiscard]] const std::string& name() const { return name_; }
  [[nodiscard]] PaonDegree degree() const { return degree_; }
  [[nodiscard]] PaonForm form() const { return form_; }
  [[nodiscard]] const ConvSpec& spec() const { return spec_; }

 private:
  std::string name_;
  PaonDegree degree_;
  ConvSpec spec_;
  PaonForm form_;
  double init_gain_ = 0.0;
  std::vector<Parameter<T>> numerator_;
  std::vector<Parameter<T>> denominator_;
  Parameter<T> bias_;
  std::unique_ptr<Shifter<T>> shifter_;
};

/// Fully-connected Padé layer over (N, F) features.
template <typename T>
class PaLaDense {
 public:
  PaLaDense(std::string name, PaonDegree degree, std::size_t in_features, std::size_t out_features,
            PaonForm form);

  /// Same scheme as PaLaConv::init with s = sqrt(1 / in_features).
  void init(std::uint64_t seed);
  void set_init_gain(double gain) { init_gain_ = gain; }
  Var<T> forward(ForwardContext<T>& ctx, const Var<T>& x);

  ParamList<T> parameters();
  [[nodiscard]] std::size_t parameter_count() const;
  [[nodiscard]] LayerOps count_ops(const Shape& in) const;

  Parameter<T>& numerator(int k) { return numerator_.at(static_cast<std::size_t>(k - 1)); }
  Parameter<T>& denominator(int k) { return denominator_.at(static_cast<std::size_t>(k - 1)); }
  Parameter<T>& bias() { return bias_; }
  [[nodiscard]] const std::string& name() const { return name_; }

 private:
  std::string name_;
  PaonDegree degree_;
  std::size_t in_;
  std::size_t out_;
  PaonForm form_;
  double init_gain_ = 0.0;
  std::vector<Parameter<T>> numerator_;
  std::vector<Parameter<T>> denominator_;
  Parameter<T> bias_;
};

/// Plain convolution (a classic neuron layer).
template <typename T>
class Conv2d final : public ConvLayer<T> {
 public:
  Conv2d(std::string name, ConvSpec spec, bool with_bias = true);

  void init(std::uint64_t seed) override;
  Var<T> forward(ForwardContext<T>& ctx, const Var<T>& x) override;
  ParamList<T> parameters() override;
  [[nodiscard]] LayerOps count_ops(const Shape& in, Shape* out = nullptr) const override;

  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }
  [[nodiscard]] const ConvSpec& spec() const { return spec_; }

 private:
  std::string name_;
  ConvSpec spec_;
  bool with_bias_;
  Parameter<T> weight_;
  Parameter<T> bias_;
};

template <typename T>
class Linear {
 public:
  Linear(std::string name, std::size_t in_features, std::size_t out_features);

  void init(std::uint64_t seed);
  Var<T> forward(ForwardContext<T>& ctx, const Var<T>& x);
  ParamList<T> parameters();
  [[nodiscard]] LayerOps count_ops(const Shape& in) const;

  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  std::string name_;
  Parameter<T> weight_;
  Parameter<T> bias_;
};

template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d(std::string name, std::size_t channels);

  Var<T> forward(ForwardContext<T>& ctx, const Var<T>& x);
  ParamList<T> parameters();
  ops::BatchNormBuffers<T>& buffers() { return buffers_; }
  [[nodiscard]] const std::string& name() const { return name_; }

 private:
  std::string name_;
  Parameter<T> gamma_;
  Parameter<T> beta_;
  ops::BatchNormBuffers<T> buffers_;
};

}  // namespace paon
