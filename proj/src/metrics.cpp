#include "paon/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace paon {

namespace {

template <typename T>
void require_rgb(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  require_rank(a.shape(), 3, what);
  if (a.dim(0) != 3) throw ShapeError(std::string(what) + ": expected 3 channels");
  Tensor<T>::require_same_shape(a, b, what);
}

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> g(static_cast<std::size_t>(size));
  const int r = size / 2;
  double total = 0.0;
  for (int i = 0; i < size; ++i) {
    g[i] = std::exp(-double((i - r) * (i - r)) / (2.0 * sigma * sigma));
    total += g[i];
  }
  for (auto& v : g) v /= total;
  return g;
}

template <typename T>
std::vector<double> luma(const Tensor<T>& img) {
  const std::size_t H = img.dim(1), W = img.dim(2), plane = H * W;
  std::vector<double> y(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    y[i] = 0.299 * to_8bit(img[i]) + 0.587 * to_8bit(img[plane + i]) +
           0.114 * to_8bit(img[2 * plane + i]);
  }
  return y;
}

// Separable 'valid' filtering of an H x W plane.
std::vector<double> filter_valid(const std::vector<double>& src, std::size_t H, std::size_t W,
                                 const std::vector<double>& g) {
  const std::size_t k = g.size(), Ho = H - k + 1, Wo = W - k + 1;
  std::vector<double> rows(H * Wo), out(Ho * Wo);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < Wo; ++x) {
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) s += g[i] * src[y * W + x + i];
      rows[y * Wo + x] = s;
    }
  for (std::size_t y = 0; y < Ho; ++y)
    for (std::size_t x = 0; x < Wo; ++x) {
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) s += g[i] * rows[(y + i) * Wo + x];
      out[y * Wo + x] = s;
    }
  return out;
}

}  // namespace

std::uint8_t to_8bit(double x) {
  const double v = std::round((x + 1.0) * 127.5);
  if (!(v > 0.0)) return 0;
  if (v > 255.0) return 255;
  return static_cast<std::uint8_t>(v);
}

template <typename T>
Tensor<T> batch_item(const Tensor<T>& batch, std::size_t n) {
  require_rank(batch.shape(), 4, "batch_item");
  if (n >= batch.dim(0)) throw ShapeError("batch_item: index out of range");
  const std::size_t per = batch.size() / batch.dim(0);
  std::vector<T> data(batch.data() + n * per, batch.data() + (n + 1) * per);
  return Tensor<T>(Shape{batch.dim(1), batch.dim(2), batch.dim(3)}, std::move(data));
}

template <typename T>
double psnr_rgb(const Tensor<T>& a, const Tensor<T>& b) {
  require_rgb(a, b, "psnr_rgb");
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = double(to_8bit(a[i])) - double(to_8bit(b[i]));
    se += d * d;
  }
  if (se == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = se / static_cast<double>(a.size());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

template <typename T>
double ssim_y(const Tensor<T>& a, const Tensor<T>& b) {
  require_rgb(a, b, "ssim_y");
  constexpr int kWindow = 11;
  const std::size_t H = a.dim(1), W = a.dim(2);
  if (H < kWindow || W < kWindow) throw ShapeError("ssim_y: image smaller than the 11x11 window");
  const auto g = gaussian_window(kWindow, 1.5);
  const auto ya = luma(a), yb = luma(b);
  std::vector<double> aa(ya.size()), bb(ya.size()), ab(ya.size());
  for (std::size_t i = 0; i < ya.size(); ++i) {
    aa[i] = ya[i] * ya[i];
    bb[i] = yb[i] * yb[i];
    ab[i] = ya[i] * yb[i];
  }
  const auto mu_a = filter_valid(ya, H, W, g), mu_b = filter_valid(yb, H, W, g);
  const auto s_aa = filter_valid(aa, H, W, g), s_bb = filter_valid(bb, H, W, g),
             s_ab = filter_valid(ab, H, W, g);
  const double c1 = (0.01 * 255) * (0.01 * 255), c2 = (0.03 * 255) * (0.03 * 255);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = s_aa[i] - ma * ma, vb = s_bb[i] - mb * mb, cov = s_ab[i] - ma * mb;
    total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

template Tensor<float> batch_item<float>(const Tensor<float>&, std::size_t);
template Tensor<double> batch_item<double>(const Tensor<double>&, std::size_t);
template double psnr_rgb<float>(const Tensor<float>&, const Tensor<float>&);
template double psnr_rgb<double>(const Tensor<double>&, const Tensor<double>&);
template double ssim_y<float>(const Tensor<float>&, const Tensor<float>&);
template double ssim_y<double>(const Tensor<double>&, const Tensor<double>&);

}  // namespace paon
