#pragma once

// Deterministic numeric kernels over 4-D (N, C, H, W) tensors. Every kernel is
// a pure function of its inputs; accumulation order is fixed so results are
// bit-reproducible for a given build.

#include <cstddef>
#include <optional>

#include "paon/tensor.hpp"

namespace paon {

enum class Padding { Replicate, Zero };

struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  Padding padding = Padding::Replicate;

  void validate() const;
  [[nodiscard]] std::size_t pad() const { return kernel / 2; }
  [[nodiscard]] std::size_t out_extent(std::size_t in) const {
    return (in + 2 * pad() - kernel) / stride + 1;
  }
};

namespace kernels {

/// C[M x N] += A[M x K] * B[K x N]; each output element accumulates k = 0..K-1
/// in order starting from its current value.
template <typename T>
void gemm_acc(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda,
              const T* B, std::size_t ldb, T* C, std::size_t ldc);

template <typename T>
Tensor<T> replicate_pad(const Tensor<T>& t, std::size_t p);

/// Cross-correlation with `spec.pad()` padding on each side. Per output element
/// the sum runs over input channel, then kernel row, then kernel column.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                 const ConvSpec& spec);

/// Gradients of conv2d. Any of dx, dw, dbias may be null; non-null outputs are
/// accumulated into (they must already be allocated with matching shapes).
template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& grad_out,
                     const ConvSpec& spec, Tensor<T>* dx, Tensor<T>* dw, Tensor<T>* dbias);

/// out[i] = t[i]^k by repeated multiplication.
template <typename T>
Tensor<T> elem_pow(const Tensor<T>& t, int k);

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& t, std::size_t r);

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& t, std::size_t r);

/// Bilinear resampling with clamp-to-edge (replicate) boundaries.
/// offsets is (N, 2C, H, W): channel 2c holds the horizontal shift dx of input
/// channel c and channel 2c+1 the vertical shift dy, so that
/// out(n, c, y, x) = t(n, c, y + dy, x + dx).
template <typename T>
Tensor<T> bilinear_sample(const Tensor<T>& t, const Tensor<T>& offsets);

template <typename T>
void bilinear_sample_backward(const Tensor<T>& t, const Tensor<T>& offsets,
                              const Tensor<T>& grad_out, Tensor<T>* dt, Tensor<T>* doffsets);

template <typename T>
struct BatchNormSaved {
  Tensor<T> mean;     // (C)
  Tensor<T> inv_std;  // (C)
};

/// Per-channel normalization. In training mode batch statistics are used and
/// the running statistics are updated with `momentum` (unbiased variance); in
/// eval mode the running statistics are used.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var, bool training,
                     double momentum, double eps, BatchNormSaved<T>* saved);

template <typename T>
void batch_norm_backward(const Tensor<T>& x, const Tensor<T>& gamma,
                         const BatchNormSaved<T>& saved, bool training,
                         const Tensor<T>& grad_out, Tensor<T>* dx, Tensor<T>* dgamma,
                         Tensor<T>* dbeta);

}  // namespace kernels
}  // namespace paon
