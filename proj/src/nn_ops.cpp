#include "paon/nn_ops.hpp"

#include <cmath>

namespace paon::ops {

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const std::optional<Var<T>>& bias,
              const ConvSpec& spec) {
  Tensor<T> out = kernels::conv2d(x.value(), w.value(), bias ? &bias->value() : nullptr, spec);
  std::vector<Var<T>> inputs{x, w};
  if (bias) inputs.push_back(*bias);
  const bool has_bias = bias.has_value();
  return x.tape().record(std::move(out), inputs, [spec, has_bias](BackwardContext<T>& ctx) {
    Tensor<T>* dx = ctx.needs(0) ? &ctx.grad(0) : nullptr;
    Tensor<T>* dw = ctx.needs(1) ? &ctx.grad(1) : nullptr;
    Tensor<T>* db = has_bias && ctx.needs(2) ? &ctx.grad(2) : nullptr;
    kernels::conv2d_backward(ctx.input(0), ctx.input(1), ctx.grad_out(), spec, dx, dw, db);
  });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const std::optional<Var<T>>& bias) {
  require_rank(x.shape(), 2, "linear input");
  require_rank(w.shape(), 2, "linear weight");
  const std::size_t N = x.shape()[0], F = x.shape()[1], O = w.shape()[0];
  if (w.shape()[1] != F) {
    throw ShapeError("linear: input features " + std::to_string(F) + " vs weight " +
                     to_string(w.shape()));
  }
  if (bias && bias->shape() != Shape{O}) throw ShapeError("linear: bias shape");
  std::vector<T> wT(F * O);
  const auto& wv = w.value();
  for (std::size_t o = 0; o < O; ++o)
    for (std::size_t f = 0; f < F; ++f) wT[f * O + o] = wv[o * F + f];
  Tensor<T> out(Shape{N, O});
  kernels::gemm_acc(N, O, F, x.value().data(), F, wT.data(), O, out.data(), O);
  if (bias) {
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t o = 0; o < O; ++o) out[n * O + o] += bias->value()[o];
  }
  std::vector<Var<T>> inputs{x, w};
  if (bias) inputs.push_back(*bias);
  const bool has_bias = bias.has_value();
  return x.tape().record(std::move(out), inputs, [N, F, O, has_bias](BackwardContext<T>& ctx) {
    const auto& g = ctx.grad_out();
    if (ctx.needs(0)) {
      kernels::gemm_acc(N, F, O, g.data(), O, ctx.input(1).data(), F, ctx.grad(0).data(), F);
    }
    if (ctx.needs(1)) {
      std::vector<T> gT(O * N);
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t o = 0; o < O; ++o) gT[o * N + n] = g[n * O + o];
      kernels::gemm_acc(O, F, N, gT.data(), N, ctx.input(0).data(), F, ctx.grad(1).data(), F);
    }
    if (has_bias && ctx.needs(2)) {
      auto& gb = ctx.grad(2);
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t o = 0; o < O; ++o) gb[o] += g[n * O + o];
    }
  });
}

namespace {

template <typename T>
void check_channel_vector(const Var<T>& x, const Var<T>& v, const char* what) {
  require_rank(x.shape(), 4, what);
  if (v.shape() != Shape{x.shape()[1]}) {
    throw ShapeError(std::string(what) + ": per-channel vector " + to_string(v.shape()) +
                     " does not match " + to_string(x.shape()));
  }
}

}  // namespace

template <typename T>
Var<T> add_channel_bias(const Var<T>& x, const Var<T>& b) {
  check_channel_vector(x, b, "add_channel_bias");
  const std::size_t N = x.shape()[0], C = x.shape()[1], HW = x.shape()[2] * x.shape()[3];
  Tensor<T> out = x.value();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < HW; ++i) out[(n * C + c) * HW + i] += b.value()[c];
  return x.tape().record(std::move(out), {x, b}, [N, C, HW](BackwardContext<T>& ctx) {
    const auto& g = ctx.grad_out();
    if (ctx.needs(0)) ctx.grad(0) += g;
    if (ctx.needs(1)) {
      auto& gb = ctx.grad(1);
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t i = 0; i < HW; ++i) gb[c] += g[(n * C + c) * HW + i];
    }
  });
}

template <typename T>
Var<T> mul_channel(const Var<T>& x, const Var<T>& s) {
  check_channel_vector(x, s, "mul_channel");
  const std::size_t N = x.shape()[0], C = x.shape()[1], HW = x.shape()[2] * x.shape()[3];
  Tensor<T> out = x.value();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < HW; ++i) out[(n * C + c) * HW + i] *= s.value()[c];
  return x.tape().record(std::move(out), {x, s}, [N, C, HW](BackwardContext<T>& ctx) {
    const auto& g = ctx.grad_out();
    const auto& xv = ctx.input(0);
    const auto& sv = ctx.input(1);
    if (ctx.needs(0)) {
      auto& gx = ctx.grad(0);
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t i = 0; i < HW; ++i) {
            const std::size_t j = (n * C + c) * HW + i;
            gx[j] += g[j] * sv[c];
          }
    }
    if (ctx.needs(1)) {
      auto& gs = ctx.grad(1);
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t i = 0; i < HW; ++i) {
            const std::size_t j = (n * C + c) * HW + i;
            gs[c] += g[j] * xv[j];
          }
    }
  });
}

template <typename T>
Var<T> pixel_shuffle(const Var<T>& x, std::size_t r) {
  return x.tape().record(kernels::pixel_shuffle(x.value(), r), {x}, [r](BackwardContext<T>& ctx) {
    ctx.grad(0) += kernels::pixel_unshuffle(ctx.grad_out(), r);
  });
}

template <typename T>
Var<T> bilinear_sample(const Var<T>& x, const Var<T>& offsets) {
  return x.tape().record(kernels::bilinear_sample(x.value(), offsets.value()), {x, offsets},
                         [](BackwardContext<T>& ctx) {
                           Tensor<T>* dx = ctx.needs(0) ? &ctx.grad(0) : nullptr;
                           Tensor<T>* doff = ctx.needs(1) ? &ctx.grad(1) : nullptr;
                           kernels::bilinear_sample_backward(ctx.input(0), ctx.input(1),
                                                             ctx.grad_out(), dx, doff);
                         });
}

template <typename T>
Var<T> expand_offsets(const Var<T>& v, std::size_t n, std::size_t h, std::size_t w) {
  require_rank(v.shape(), 2, "expand_offsets");
  const std::size_t B = v.shape()[0], K = v.shape()[1];
  if (B != 1 && B != n) throw ShapeError("expand_offsets: batch must be 1 or " + std::to_string(n));
  const std::size_t HW = h * w;
  Tensor<T> out(Shape{n, K, h, w});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < K; ++k) {
      const T val = v.value()[(B == 1 ? 0 : i) * K + k];
      T* o = out.data() + (i * K + k) * HW;
      for (std::size_t j = 0; j < HW; ++j) o[j] = val;
    }
  return v.tape().record(std::move(out), {v}, [B, K, n, HW](BackwardContext<T>& ctx) {
    const auto& g = ctx.grad_out();
    auto& gv = ctx.grad(0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < K; ++k) {
        T s = T{0};
        const T* gp = g.data() + (i * K + k) * HW;
        for (std::size_t j = 0; j < HW; ++j) s += gp[j];
        gv[(B == 1 ? 0 : i) * K + k] += s;
      }
  });
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  require_rank(x.shape(), 4, "global_avg_pool");
  const std::size_t N = x.shape()[0], C = x.shape()[1], HW = x.shape()[2] * x.shape()[3];
  Tensor<T> out(Shape{N, C});
  for (std::size_t i = 0; i < N * C; ++i) {
    T s = T{0};
    const T* p = x.value().data() + i * HW;
    for (std::size_t j = 0; j < HW; ++j) s += p[j];
    out[i] = s / static_cast<T>(HW);
  }
  return x.tape().record(std::move(out), {x}, [N, C, HW](BackwardContext<T>& ctx) {
    const auto& g = ctx.grad_out();
    auto& gx = ctx.grad(0);
    const T inv = T{1} / static_cast<T>(HW);
    for (std::size_t i = 0; i < N * C; ++i) {
      const T v = g[i] * inv;
      T* p = gx.data() + i * HW;
      for (std::size_t j = 0; j < HW; ++j) p[j] += v;
    }
  });
}

template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  BatchNormBuffers<T>& buffers, bool training) {
  kernels::BatchNormSaved<T> saved;
  Tensor<T> out = kernels::batch_norm(x.value(), gamma.value(), beta.value(), buffers.running_mean,
                                      buffers.running_var, training, buffers.momentum,
                                      buffers.eps, &saved);
  return x.tape().record(
      std::move(out), {x, gamma, beta},
      [saved = std::move(saved), training](BackwardContext<T>& ctx) {
        Tensor<T>* dx = ctx.needs(0) ? &ctx.grad(0) : nullptr;
        Tensor<T>* dg = ctx.needs(1) ? &ctx.grad(1) : nullptr;
        Tensor<T>* db = ctx.needs(2) ? &ctx.grad(2) : nullptr;
        kernels::batch_norm_backward(ctx.input(0), ctx.input(1), saved, training, ctx.grad_out(),
                                     dx, dg, db);
      });
}

double barron_rho(double d, double alpha, double c) {
  const double z = (d / c) * (d / c);
  if (alpha == 2.0) return 0.5 * z;
  if (alpha == 0.0) return std::log(0.5 * z + 1.0);
  const double b = std::abs(alpha - 2.0);
  return (b / alpha) * (std::pow(z / b + 1.0, alpha / 2.0) - 1.0);
}

namespace {

// d rho / d d.
double barron_drho(double d, double alpha, double c) {
  const double c2 = c * c;
  if (alpha == 2.0) return d / c2;
  if (alpha == 0.0) return 2.0 * d / (d * d + 2.0 * c2);
  const double b = std::abs(alpha - 2.0);
  return (d / c2) * std::pow((d * d / c2) / b + 1.0, alpha / 2.0 - 1.0);
}

}  // namespace

template <typename T>
Var<T> barron_loss(const Var<T>& pred, const Var<T>& target, double alpha, double c) {
  Tensor<T>::require_same_shape(pred.value(), target.value(), "barron_loss");
  const auto& p = pred.value();
  const auto& t = target.value();
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += barron_rho(p[i] - t[i], alpha, c);
  const double M = static_cast<double>(p.size());
  return pred.tape().record(
      Tensor<T>::scalar(static_cast<T>(s / M)), {pred, target},
      [alpha, c, M](BackwardContext<T>& ctx) {
        const double g = ctx.grad_out()[0] / M;
        const auto& pv = ctx.input(0);
        const auto& tv = ctx.input(1);
        Tensor<T>* gp = ctx.needs(0) ? &ctx.grad(0) : nullptr;
        Tensor<T>* gt = ctx.needs(1) ? &ctx.grad(1) : nullptr;
        for (std::size_t i = 0; i < pv.size(); ++i) {
          const T v = static_cast<T>(g * barron_drho(pv[i] - tv[i], alpha, c));
          if (gp) (*gp)[i] += v;
          if (gt) (*gt)[i] -= v;
        }
      });
}

template <typename T>
Var<T> mse_loss(const Var<T>& pred, const Var<T>& target) {
  auto d = sub(pred, target);
  return mean(mul(d, d));
}

template <typename T>
Var<T> softmax_cross_entropy(const Var<T>& logits, const std::vector<int>& labels) {
  require_rank(logits.shape(), 2, "softmax_cross_entropy");
  const std::size_t N = logits.shape()[0], K = logits.shape()[1];
  if (labels.size() != N) throw ShapeError("softmax_cross_entropy: label count mismatch");
  const auto& z = logits.value();
  Tensor<T> prob(Shape{N, K});
  double loss = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    if (labels[n] < 0 || static_cast<std::size_t>(labels[n]) >= K) {
      throw Error("softmax_cross_entropy: label out of range");
    }
    double mx = z[n * K];
    for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, static_cast<double>(z[n * K + k]));
    double se = 0.0;
    for (std::size_t k = 0; k < K; ++k) se += std::exp(z[n * K + k] - mx);
    for (std::size_t k = 0; k < K; ++k) prob[n * K + k] = static_cast<T>(std::exp(z[n * K + k] - mx) / se);
    loss += std::log(se) + mx - z[n * K + static_cast<std::size_t>(labels[n])];
  }
  return logits.tape().record(
      Tensor<T>::scalar(static_cast<T>(loss / static_cast<double>(N))), {logits},
      [prob = std::move(prob), labels, N, K](BackwardContext<T>& ctx) {
        const T g = ctx.grad_out()[0] / static_cast<T>(N);
        auto& gz = ctx.grad(0);
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t k = 0; k < K; ++k) {
            const T onehot = static_cast<std::size_t>(labels[n]) == k ? T{1} : T{0};
            gz[n * K + k] += g * (prob[n * K + k] - onehot);
          }
      });
}

#define PAON_INSTANTIATE_NN_OPS(T)                                                            \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const std::optional<Var<T>>&,       \
                            const ConvSpec&);                                                 \
  template Var<T> linear<T>(const Var<T>&, const Var<T>&, const std::optional<Var<T>>&);      \
  template Var<T> add_channel_bias<T>(const Var<T>&, const Var<T>&);                          \
  template Var<T> mul_channel<T>(const Var<T>&, const Var<T>&);                               \
  template Var<T> pixel_shuffle<T>(const Var<T>&, std::size_t);                               \
  template Var<T> bilinear_sample<T>(const Var<T>&, const Var<T>&);                           \
  template Var<T> expand_offsets<T>(const Var<T>&, std::size_t, std::size_t, std::size_t);    \
  template Var<T> global_avg_pool<T>(const Var<T>&);                                          \
  template Var<T> batch_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&,                  \
                                BatchNormBuffers<T>&, bool);                                  \
  template Var<T> barron_loss<T>(const Var<T>&, const Var<T>&, double, double);               \
  template Var<T> mse_loss<T>(const Var<T>&, const Var<T>&);                                  \
  template Var<T> softmax_cross_entropy<T>(const Var<T>&, const std::vector<int>&);

PAON_INSTANTIATE_NN_OPS(float)
PAON_INSTANTIATE_NN_OPS(double)

}  // namespace paon::ops
