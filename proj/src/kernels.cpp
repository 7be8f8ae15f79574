#include "paon/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace paon {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

void ConvSpec::validate() const {
  if (kernel % 2 == 0) throw ShapeError("convolution kernel must be odd, got " + std::to_string(kernel));
  if (stride < 1) throw ShapeError("convolution stride must be >= 1");
  if (in_channels < 1 || out_channels < 1) throw ShapeError("convolution channels must be >= 1");
}

namespace kernels {

namespace {

inline std::size_t clamp_index(long v, std::size_t n) {
  if (v < 0) return 0;
  if (v >= static_cast<long>(n)) return n - 1;
  return static_cast<std::size_t>(v);
}

// col[(c*k + ky)*k + kx][oy*Wo + ox] for one image.
template <typename T>
void im2col(const T* img, std::size_t C, std::size_t H, std::size_t W, const ConvSpec& spec,
            std::size_t Ho, std::size_t Wo, T* col) {
  const std::size_t k = spec.kernel;
  const long p = static_cast<long>(spec.pad());
  const std::size_t s = spec.stride;
  const std::size_t P = Ho * Wo;
  for (std::size_t c = 0; c < C; ++c) {
    const T* plane = img + c * H * W;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        T* row = col + ((c * k + ky) * k + kx) * P;
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          const long iy = static_cast<long>(oy * s + ky) - p;
          const bool y_out = iy < 0 || iy >= static_cast<long>(H);
          const std::size_t cy = clamp_index(iy, H);
          for (std::size_t ox = 0; ox < Wo; ++ox) {
            const long ix = static_cast<long>(ox * s + kx) - p;
            const bool x_out = ix < 0 || ix >= static_cast<long>(W);
            if (spec.padding == Padding::Zero && (y_out || x_out)) {
              row[oy * Wo + ox] = T{0};
            } else {
              row[oy * Wo + ox] = plane[cy * W + clamp_index(ix, W)];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_acc(const T* col, std::size_t C, std::size_t H, std::size_t W, const ConvSpec& spec,
                std::size_t Ho, std::size_t Wo, T* img) {
  const std::size_t k = spec.kernel;
  const long p = static_cast<long>(spec.pad());
  const std::size_t s = spec.stride;
  const std::size_t P = Ho * Wo;
  for (std::size_t c = 0; c < C; ++c) {
    T* plane = img + c * H * W;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T* row = col + ((c * k + ky) * k + kx) * P;
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          const long iy = static_cast<long>(oy * s + ky) - p;
          const bool y_out = iy < 0 || iy >= static_cast<long>(H);
          const std::size_t cy = clamp_index(iy, H);
          for (std::size_t ox = 0; ox < Wo; ++ox) {
            const long ix = static_cast<long>(ox * s + kx) - p;
            const bool x_out = ix < 0 || ix >= static_cast<long>(W);
            if (spec.padding == Padding::Zero && (y_out || x_out)) continue;
            plane[cy * W + clamp_index(ix, W)] += row[oy * Wo + ox];
          }
        }
      }
    }
  }
}

void check_conv_inputs(const Shape& xs, const Shape& ws, const ConvSpec& spec) {
  spec.validate();
  require_rank(xs, 4, "conv2d input");
  require_rank(ws, 4, "conv2d weight");
  if (xs[1] != spec.in_channels) {
    throw ShapeError("conv2d: input has " + std::to_string(xs[1]) + " channels, spec expects " +
                     std::to_string(spec.in_channels));
  }
  const Shape expect{spec.out_channels, spec.in_channels, spec.kernel, spec.kernel};
  if (ws != expect) {
    throw ShapeError("conv2d: weight shape " + to_string(ws) + " expected " + to_string(expect));
  }
}

}  // namespace

template <typename T>
void gemm_acc(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda,
              const T* B, std::size_t ldb, T* C, std::size_t ldc) {
  constexpr std::size_t MR = 4;
  constexpr std::size_t NR = 16;
  std::size_t i0 = 0;
  for (; i0 + MR <= M; i0 += MR) {
    std::size_t j0 = 0;
    for (; j0 + NR <= N; j0 += NR) {
      T acc[MR][NR];
      for (std::size_t i = 0; i < MR; ++i)
        for (std::size_t j = 0; j < NR; ++j) acc[i][j] = C[(i0 + i) * ldc + j0 + j];
      const T* a0 = A + (i0 + 0) * lda;
      const T* a1 = A + (i0 + 1) * lda;
      const T* a2 = A + (i0 + 2) * lda;
      const T* a3 = A + (i0 + 3) * lda;
      for (std::size_t k = 0; k < K; ++k) {
        const T* b = B + k * ldb + j0;
        const T v0 = a0[k], v1 = a1[k], v2 = a2[k], v3 = a3[k];
        for (std::size_t j = 0; j < NR; ++j) {
          const T bj = b[j];
          acc[0][j] += v0 * bj;
          acc[1][j] += v1 * bj;
          acc[2][j] += v2 * bj;
          acc[3][j] += v3 * bj;
        }
      }
      for (std::size_t i = 0; i < MR; ++i)
        for (std::size_t j = 0; j < NR; ++j) C[(i0 + i) * ldc + j0 + j] = acc[i][j];
    }
    for (; j0 < N; ++j0) {
      for (std::size_t i = 0; i < MR; ++i) {
        T acc = C[(i0 + i) * ldc + j0];
        const T* a = A + (i0 + i) * lda;
        for (std::size_t k = 0; k < K; ++k) acc += a[k] * B[k * ldb + j0];
        C[(i0 + i) * ldc + j0] = acc;
      }
    }
  }
  for (; i0 < M; ++i0) {
    const T* a = A + i0 * lda;
    T* c = C + i0 * ldc;
    for (std::size_t k = 0; k < K; ++k) {
      const T v = a[k];
      const T* b = B + k * ldb;
      for (std::size_t j = 0; j < N; ++j) c[j] += v * b[j];
    }
  }
}

template <typename T>
Tensor<T> replicate_pad(const Tensor<T>& t, std::size_t p) {
  require_rank(t.shape(), 4, "replicate_pad");
  const std::size_t N = t.dim(0), C = t.dim(1), H = t.dim(2), W = t.dim(3);
  Tensor<T> out(Shape{N, C, H + 2 * p, W + 2 * p});
  const long lp = static_cast<long>(p);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < H + 2 * p; ++y) {
        const std::size_t sy = clamp_index(static_cast<long>(y) - lp, H);
        for (std::size_t x = 0; x < W + 2 * p; ++x) {
          out.at(n, c, y, x) = t.at(n, c, sy, clamp_index(static_cast<long>(x) - lp, W));
        }
      }
  return out;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                 const ConvSpec& spec) {
  check_conv_inputs(x.shape(), w.shape(), spec);
  if (bias && bias->shape() != Shape{spec.out_channels}) throw ShapeError("conv2d: bias shape");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Ho = spec.out_extent(H), Wo = spec.out_extent(W);
  const std::size_t Co = spec.out_channels;
  const std::size_t Kc = C * spec.kernel * spec.kernel;
  const std::size_t P = Ho * Wo;
  Tensor<T> out(Shape{N, Co, Ho, Wo});
  std::vector<T> col(Kc * P);
  for (std::size_t n = 0; n < N; ++n) {
    im2col(x.data() + n * C * H * W, C, H, W, spec, Ho, Wo, col.data());
    T* o = out.data() + n * Co * P;
    gemm_acc(Co, P, Kc, w.data(), Kc, col.data(), P, o, P);
    if (bias) {
      for (std::size_t c = 0; c < Co; ++c) {
        const T b = (*bias)[c];
        for (std::size_t i = 0; i < P; ++i) o[c * P + i] += b;
      }
    }
  }
  return out;
}

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& grad_out,
                     const ConvSpec& spec, Tensor<T>* dx, Tensor<T>* dw, Tensor<T>* dbias) {
  check_conv_inputs(x.shape(), w.shape(), spec);
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Ho = spec.out_extent(H), Wo = spec.out_extent(W);
  const std::size_t Co = spec.out_channels;
  const std::size_t Kc = C * spec.kernel * spec.kernel;
  const std::size_t P = Ho * Wo;
  if (grad_out.shape() != Shape{N, Co, Ho, Wo}) throw ShapeError("conv2d_backward: grad shape");

  std::vector<T> col;
  std::vector<T> colT;
  std::vector<T> wT;
  if (dw) {
    col.resize(Kc * P);
    colT.resize(P * Kc);
  }
  if (dx) {
    wT.resize(Kc * Co);
    for (std::size_t o = 0; o < Co; ++o)
      for (std::size_t k = 0; k < Kc; ++k) wT[k * Co + o] = w[o * Kc + k];
  }
  std::vector<T> dcol(dx ? Kc * P : 0);

  for (std::size_t n = 0; n < N; ++n) {
    const T* g = grad_out.data() + n * Co * P;
    if (dbias) {
      for (std::size_t c = 0; c < Co; ++c) {
        T s = T{0};
        for (std::size_t i = 0; i < P; ++i) s += g[c * P + i];
        (*dbias)[c] += s;
      }
    }
    if (dw) {
      im2col(x.data() + n * C * H * W, C, H, W, spec, Ho, Wo, col.data());
      for (std::size_t k = 0; k < Kc; ++k)
        for (std::size_t i = 0; i < P; ++i) colT[i * Kc + k] = col[k * P + i];
      gemm_acc(Co, Kc, P, g, P, colT.data(), Kc, dw->data(), Kc);
    }
    if (dx) {
      std::fill(dcol.begin(), dcol.end(), T{0});
      gemm_acc(Kc, P, Co, wT.data(), Co, g, P, dcol.data(), P);
      col2im_acc(dcol.data(), C, H, W, spec, Ho, Wo, dx->data() + n * C * H * W);
    }
  }
}

template <typename T>
Tensor<T> elem_pow(const Tensor<T>& t, int k) {
  if (k < 1) throw Error("elem_pow: exponent must be >= 1 (the zeroth-order term is the bias)");
  Tensor<T> out = t;
  for (int i = 1; i < k; ++i) {
    for (std::size_t j = 0; j < out.size(); ++j) out[j] *= t[j];
  }
  return out;
}

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& t, std::size_t r) {
  require_rank(t.shape(), 4, "pixel_shuffle");
  const std::size_t N = t.dim(0), Cr = t.dim(1), H = t.dim(2), W = t.dim(3);
  if (r < 1 || Cr % (r * r) != 0) {
    throw ShapeError("pixel_shuffle: channels " + std::to_string(Cr) + " not divisible by r^2");
  }
  const std::size_t C = Cr / (r * r);
  Tensor<T> out(Shape{N, C, H * r, W * r});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < r; ++j)
          for (std::size_t h = 0; h < H; ++h)
            for (std::size_t w = 0; w < W; ++w)
              out.at(n, c, h * r + i, w * r + j) = t.at(n, (c * r + i) * r + j, h, w);
  return out;
}

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& t, std::size_t r) {
  require_rank(t.shape(), 4, "pixel_unshuffle");
  const std::size_t N = t.dim(0), C = t.dim(1), Hr = t.dim(2), Wr = t.dim(3);
  if (r < 1 || Hr % r != 0 || Wr % r != 0) throw ShapeError("pixel_unshuffle: extent not divisible by r");
  const std::size_t H = Hr / r, W = Wr / r;
  Tensor<T> out(Shape{N, C * r * r, H, W});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < r; ++j)
          for (std::size_t h = 0; h < H; ++h)
            for (std::size_t w = 0; w < W; ++w)
              out.at(n, (c * r + i) * r + j, h, w) = t.at(n, c, h * r + i, w * r + j);
  return out;
}

namespace {

void check_sample_inputs(const Shape& ts, const Shape& os) {
  require_rank(ts, 4, "bilinear_sample input");
  require_rank(os, 4, "bilinear_sample offsets");
  if (os[0] != ts[0] || os[1] != 2 * ts[1] || os[2] != ts[2] || os[3] != ts[3]) {
    throw ShapeError("bilinear_sample: offsets " + to_string(os) + " do not match input " +
                     to_string(ts));
  }
}

struct Tap {
  std::size_t y0, y1, x0, x1;
  double fy, fx;
};

template <typename T>
Tap make_tap(std::size_t y, std::size_t x, T dy, T dx, std::size_t H, std::size_t W) {
  const T py = static_cast<T>(y) + dy;
  const T px = static_cast<T>(x) + dx;
  const T fy0 = std::floor(py);
  const T fx0 = std::floor(px);
  Tap tap;
  tap.fy = static_cast<double>(py - fy0);
  tap.fx = static_cast<double>(px - fx0);
  const long iy = static_cast<long>(fy0);
  const long ix = static_cast<long>(fx0);
  tap.y0 = clamp_index(iy, H);
  tap.y1 = clamp_index(iy + 1, H);
  tap.x0 = clamp_index(ix, W);
  tap.x1 = clamp_index(ix + 1, W);
  return tap;
}

}  // namespace

template <typename T>
Tensor<T> bilinear_sample(const Tensor<T>& t, const Tensor<T>& offsets) {
  check_sample_inputs(t.shape(), offsets.shape());
  const std::size_t N = t.dim(0), C = t.dim(1), H = t.dim(2), W = t.dim(3);
  Tensor<T> out(t.shape());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const T* plane = t.data() + (n * C + c) * H * W;
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          const T dx = offsets.at(n, 2 * c, y, x);
          const T dy = offsets.at(n, 2 * c + 1, y, x);
          if (!std::isfinite(dx) || !std::isfinite(dy)) {
            throw Error("bilinear_sample: non-finite offset");
          }
          const Tap tp = make_tap(y, x, dy, dx, H, W);
          const T fy = static_cast<T>(tp.fy), fx = static_cast<T>(tp.fx);
          const T top = (T{1} - fx) * plane[tp.y0 * W + tp.x0] + fx * plane[tp.y0 * W + tp.x1];
          const T bot = (T{1} - fx) * plane[tp.y1 * W + tp.x0] + fx * plane[tp.y1 * W + tp.x1];
          out.at(n, c, y, x) = (T{1} - fy) * top + fy * bot;
        }
    }
  return out;
}

template <typename T>
void bilinear_sample_backward(const Tensor<T>& t, const Tensor<T>& offsets,
                              const Tensor<T>& grad_out, Tensor<T>* dt, Tensor<T>* doffsets) {
  check_sample_inputs(t.shape(), offsets.shape());
  const std::size_t N = t.dim(0), C = t.dim(1), H = t.dim(2), W = t.dim(3);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const T* plane = t.data() + (n * C + c) * H * W;
      T* dplane = dt ? dt->data() + (n * C + c) * H * W : nullptr;
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          const T g = grad_out.at(n, c, y, x);
          const Tap tp = make_tap(y, x, offsets.at(n, 2 * c + 1, y, x),
                                  offsets.at(n, 2 * c, y, x), H, W);
          const T fy = static_cast<T>(tp.fy), fx = static_cast<T>(tp.fx);
          const T v00 = plane[tp.y0 * W + tp.x0], v01 = plane[tp.y0 * W + tp.x1];
          const T v10 = plane[tp.y1 * W + tp.x0], v11 = plane[tp.y1 * W + tp.x1];
          if (dplane) {
            dplane[tp.y0 * W + tp.x0] += g * (T{1} - fy) * (T{1} - fx);
            dplane[tp.y0 * W + tp.x1] += g * (T{1} - fy) * fx;
            dplane[tp.y1 * W + tp.x0] += g * fy * (T{1} - fx);
            dplane[tp.y1 * W + tp.x1] += g * fy * fx;
          }
          if (doffsets) {
            // A coordinate clamped on both taps lies on the flat replicate extension.
            const T ddx = (T{1} - fy) * (v01 - v00) + fy * (v11 - v10);
            const T ddy = (T{1} - fx) * (v10 - v00) + fx * (v11 - v01);
            doffsets->at(n, 2 * c, y, x) += g * ddx;
            doffsets->at(n, 2 * c + 1, y, x) += g * ddy;
          }
        }
    }
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var, bool training,
                     double momentum, double eps, BatchNormSaved<T>* saved) {
  require_rank(x.shape(), 4, "batch_norm");
  const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  const Shape cs{C};
  if (gamma.shape() != cs || beta.shape() != cs || running_mean.shape() != cs ||
      running_var.shape() != cs) {
    throw ShapeError("batch_norm: per-channel parameter shape mismatch");
  }
  const std::size_t M = N * HW;
  if (M == 0) throw ShapeError("batch_norm: empty batch");
  Tensor<T> mean(cs), inv_std(cs);
  for (std::size_t c = 0; c < C; ++c) {
    double mu, var;
    if (training) {
      double s = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const T* p = x.data() + (n * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) s += p[i];
      }
      mu = s / static_cast<double>(M);
      double ss = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const T* p = x.data() + (n * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) {
          const double d = p[i] - mu;
          ss += d * d;
        }
      }
      var = ss / static_cast<double>(M);
      const double unbiased = M > 1 ? ss / static_cast<double>(M - 1) : var;
      running_mean[c] = static_cast<T>((1.0 - momentum) * running_mean[c] + momentum * mu);
      running_var[c] = static_cast<T>((1.0 - momentum) * running_var[c] + momentum * unbiased);
    } else {
      mu = running_mean[c];
      var = running_var[c];
    }
    mean[c] = static_cast<T>(mu);
    inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + eps));
  }
  Tensor<T> out(x.shape());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const T* p = x.data() + (n * C + c) * HW;
      T* o = out.data() + (n * C + c) * HW;
      const T m = mean[c], is = inv_std[c], g = gamma[c], b = beta[c];
      for (std::size_t i = 0; i < HW; ++i) o[i] = (p[i] - m) * is * g + b;
    }
  if (saved) {
    saved->mean = std::move(mean);
    saved->inv_std = std::move(inv_std);
  }
  return out;
}

template <typename T>
void batch_norm_backward(const Tensor<T>& x, const Tensor<T>& gamma,
                         const BatchNormSaved<T>& saved, bool training,
                         const Tensor<T>& grad_out, Tensor<T>* dx, Tensor<T>* dgamma,
                         Tensor<T>* dbeta) {
  const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  const double M = static_cast<double>(N * HW);
  for (std::size_t c = 0; c < C; ++c) {
    const T m = saved.mean[c], is = saved.inv_std[c];
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const T* p = x.data() + (n * C + c) * HW;
      const T* g = grad_out.data() + (n * C + c) * HW;
      for (std::size_t i = 0; i < HW; ++i) {
        sum_g += g[i];
        sum_gx += static_cast<double>(g[i]) * static_cast<double>((p[i] - m) * is);
      }
    }
    if (dgamma) (*dgamma)[c] += static_cast<T>(sum_gx);
    if (dbeta) (*dbeta)[c] += static_cast<T>(sum_g);
    if (!dx) continue;
    const T scale = gamma[c] * is;
    for (std::size_t n = 0; n < N; ++n) {
      const T* p = x.data() + (n * C + c) * HW;
      const T* g = grad_out.data() + (n * C + c) * HW;
      T* d = dx->data() + (n * C + c) * HW;
      if (training) {
        const T mg = static_cast<T>(sum_g / M);
        const T mgx = static_cast<T>(sum_gx / M);
        for (std::size_t i = 0; i < HW; ++i) {
          const T xhat = (p[i] - m) * is;
          d[i] += scale * (g[i] - mg - xhat * mgx);
        }
      } else {
        for (std::size_t i = 0; i < HW; ++i) d[i] += scale * g[i];
      }
    }
  }
}

#define PAON_INSTANTIATE_KERNELS(T)                                                           \
  template void gemm_acc<T>(std::size_t, std::size_t, std::size_t, const T*, std::size_t,     \
                            const T*, std::size_t, T*, std::size_t);                          \
  template Tensor<T> replicate_pad<T>(const Tensor<T>&, std::size_t);                         \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*,          \
                               const ConvSpec&);                                              \
  template void conv2d_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                   const ConvSpec&, Tensor<T>*, Tensor<T>*, Tensor<T>*);      \
  template Tensor<T> elem_pow<T>(const Tensor<T>&, int);                                      \
  template Tensor<T> pixel_shuffle<T>(const Tensor<T>&, std::size_t);                         \
  template Tensor<T> pixel_unshuffle<T>(const Tensor<T>&, std::size_t);                       \
  template Tensor<T> bilinear_sample<T>(const Tensor<T>&, const Tensor<T>&);                  \
  template void bilinear_sample_backward<T>(const Tensor<T>&, const Tensor<T>&,               \
                                            const Tensor<T>&, Tensor<T>*, Tensor<T>*);        \
  template Tensor<T> batch_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                   Tensor<T>&, Tensor<T>&, bool, double, double,              \
                                   BatchNormSaved<T>*);                                       \
  template void batch_norm_backward<T>(const Tensor<T>&, const Tensor<T>&,                    \
                                       const BatchNormSaved<T>&, bool, const Tensor<T>&,      \
                                       Tensor<T>*, Tensor<T>*, Tensor<T>*);

PAON_INSTANTIATE_KERNELS(float)
PAON_INSTANTIATE_KERNELS(double)

}  // namespace kernels
}  // namespace paon
