#include "paon/shifter.hpp"

#include <algorithm>
#include <cmath>

namespace paon {

void ShifterConfig::validate() const {
  if (kernel % 2 == 0) throw Error("shifter offset kernel must be odd");
}

double offset_limit(int b, std::size_t h, std::size_t w) {
  if (b > 0) return static_cast<double>(b);
  return static_cast<double>(std::max(h, w)) / 4.0;
}

template <typename T>
Tensor<T> limit_offsets(const Tensor<T>& raw, double m) {
  if (!(m > 0.0)) throw Error("limit_offsets: m must be positive");
  Tensor<T> out(raw.shape());
  const T tm = static_cast<T>(m);
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = ops::bounded_tanh(raw[i], tm);
  return out;
}

template <typename T>
Shifter<T>::Shifter(std::string name, ShifterConfig cfg, std::size_t channels)
    : name_(std::move(name)), cfg_(cfg), channels_(channels) {
  cfg_.validate();
  const std::size_t C = channels_;
  if (cfg_.kind == ShifterKind::ElementWise) {
    weight_ = Parameter<T>(name_ + ".offset_w", Tensor<T>(Shape{2 * C, C, cfg_.kernel, cfg_.kernel}));
    bias_ = Parameter<T>(name_ + ".offset_b", Tensor<T>(Shape{2 * C}));
  } else if (cfg_.b == 0) {
    weight_ = Parameter<T>(name_ + ".offset_w", Tensor<T>(Shape{2 * C, C}));
    bias_ = Parameter<T>(name_ + ".offset_b", Tensor<T>(Shape{2 * C}));
  } else if (cfg_.b > 0) {
    weight_ = Parameter<T>(name_ + ".shift", Tensor<T>(Shape{1, 2 * C}));
  }
}

template <typename T>
Var<T> Shifter<T>::offsets(ForwardContext<T>& ctx, const Var<T>& x) {
  require_rank(x.shape(), 4, "shifter input");
  const std::size_t N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  if (C != channels_) throw ShapeError("shifter: channel mismatch");
  const double m = offset_limit(cfg_.b, H, W);
  if (cfg_.kind == ShifterKind::ElementWise) {
    ConvSpec spec{C, 2 * C, cfg_.kernel, 1, Padding::Replicate};
    auto raw = ops::conv2d(x, ctx.tape.param(weight_), std::optional<Var<T>>(ctx.tape.param(bias_)), spec);
    return ops::soft_limit(raw, m);
  }
  if (cfg_.b < 0) {
    return ctx.tape.constant(Tensor<T>(Shape{N, 2 * C, H, W}));
  }
  Var<T> raw;
  if (cfg_.b == 0) {
    auto pooled = ops::global_avg_pool(x);
    raw = ops::linear(pooled, ctx.tape.param(weight_), std::optional<Var<T>>(ctx.tape.param(bias_)));
  } else {
    raw = ctx.tape.param(weight_);
  }
  return ops::expand_offsets(ops::soft_limit(raw, m), N, H, W);
}

template <typename T>
Var<T> Shifter<T>::forward(ForwardContext<T>& ctx, const Var<T>& x) {
  if (!active()) return x;
  return ops::bilinear_sample(x, offsets(ctx, x));
}

template <typename T>
ParamList<T> Shifter<T>::parameters() {
  ParamList<T> out;
  if (!weight_.value.empty()) out.push_back(&weight_);
  if (!bias_.value.empty()) out.push_back(&bias_);
  return out;
}

template <typename T>
LayerOps Shifter<T>::count_ops(const Shape& in) const {
  LayerOps ops;
  ops.layer = name_;
  if (!active()) return ops;
  const std::uint64_t N = in[0], C = in[1], H = in[2], W = in[3];
  if (cfg_.kind == ShifterKind::ElementWise) {
    const std::uint64_t ks = cfg_.kernel;
    ops.shifter_mults = N * 2 * C * ks * ks * W * H * C;
  } else if (cfg_.b == 0) {
    ops.shifter_mults = N * 2 * C * C;
  }
  ops.shifter_interp_ops = N * 4 * W * H * C;
  return ops;
}

template Tensor<float> limit_offsets<float>(const Tensor<float>&, double);
template Tensor<double> limit_offsets<double>(const Tensor<double>&, double);
template class Shifter<float>;
template class Shifter<double>;

}  // namespace paon
