#pragma once

// Image fidelity metrics. Images are (3, H, W) RGB tensors scaled to [-1, 1];
// both metrics first quantize to 8 bits via round((x + 1) * 127.5).

#include <cstdint>
#include <vector>

#include "paon/tensor.hpp"

namespace paon {

/// Value written to CSV files in place of an infinite PSNR.
inline constexpr double kPsnrCap = 100.0;

/// round((x + 1) * 127.5) clamped to [0, 255].
std::uint8_t to_8bit(double x);

/// (N, C, H, W) -> (C, H, W) view copy of image n.
template <typename T>
Tensor<T> batch_item(const Tensor<T>& batch, std::size_t n);

/// PSNR in dB over all RGB samples against peak 255. Identical images give +inf.
template <typename T>
double psnr_rgb(const Tensor<T>& a, const Tensor<T>& b);

/// Mean SSIM over the valid region of the BT.601 full-range luma, with an
/// 11 x 11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03, range 255.
template <typename T>
double ssim_y(const Tensor<T>& a, const Tensor<T>& b);

/// Caps +inf (and anything above) at kPsnrCap.
inline double psnr_for_csv(double db) { return db > kPsnrCap ? kPsnrCap : db; }

}  // namespace paon
