#pragma once

// Differentiable wrappers over the tensor-core kernels plus losses.

#include <optional>
#include <vector>

#include "paon/autograd.hpp"
#include "paon/kernels.hpp"

namespace paon::ops {

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const std::optional<Var<T>>& bias,
              const ConvSpec& spec);

/// x (N, F) times w^T with w (O, F), plus optional bias (O).
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const std::optional<Var<T>>& bias);

/// x (N, C, H, W) + b (C) broadcast over batch and space.
template <typename T>
Var<T> add_channel_bias(const Var<T>& x, const Var<T>& b);

/// x (N, C, H, W) * s (C) broadcast over batch and space.
template <typename T>
Var<T> mul_channel(const Var<T>& x, const Var<T>& s);

template <typename T>
Var<T> pixel_shuffle(const Var<T>& x, std::size_t r);

template <typename T>
Var<T> bilinear_sample(const Var<T>& x, const Var<T>& offsets);

/// Broadcasts per-channel shifts v (B, 2C), B in {1, N}, to a (N, 2C, H, W) map.
template <typename T>
Var<T> expand_offsets(const Var<T>& v, std::size_t n, std::size_t h, std::size_t w);

/// (N, C, H, W) -> (N, C) spatial mean.
template <typename T>
Var<T> global_avg_pool(const Var<T>& x);

template <typename T>
struct BatchNormBuffers {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  BatchNormBuffers<T>& buffers, bool training);

/// Mean of the general robust loss over elements of (pred - target).
template <typename T>
Var<T> barron_loss(const Var<T>& pred, const Var<T>& target, double alpha, double c);

template <typename T>
Var<T> mse_loss(const Var<T>& pred, const Var<T>& target);

/// Mean softmax cross-entropy of logits (N, K) against integer labels.
template <typename T>
Var<T> softmax_cross_entropy(const Var<T>& logits, const std::vector<int>& labels);

/// Scalar form of the robust loss, shared with tests.
double barron_rho(double d, double alpha, double c);

}  // namespace paon::ops
