#include <gtest/gtest.h>

#include <cmath>

#include "paon/kernels.hpp"
#include "paon/random.hpp"
#include "support/oracles.hpp"

using namespace paon;

namespace {

using oracle::random_tensor;

TensorD naive_conv(const TensorD& x, const TensorD& w, const TensorD* bias, const ConvSpec& s) {
  return oracle::conv(x, w, bias, s.stride, s.padding);
}

}  // namespace

TEST(Gemm, MatchesTripleLoop) {
  Rng rng(1);
  for (auto [M, N, K] : {std::tuple{1, 1, 1}, {5, 17, 3}, {13, 33, 9}, {4, 16, 0}}) {
    std::vector<double> A(M * K), B(K * N), C(M * N), R(M * N);
    for (auto& v : A) v = rng.uniform(-1, 1);
    for (auto& v : B) v = rng.uniform(-1, 1);
    for (int i = 0; i < M * N; ++i) C[i] = R[i] = rng.uniform(-1, 1);
    kernels::gemm_acc<double>(M, N, K, A.data(), K, B.data(), N, C.data(), N);
    for (int i = 0; i < M; ++i)
      for (int j = 0; j < N; ++j) {
        for (int k = 0; k < K; ++k) R[i * N + j] += A[i * K + k] * B[k * N + j];
        EXPECT_NEAR(C[i * N + j], R[i * N + j], 1e-12);
      }
  }
}

TEST(Conv2d, MatchesDirectLoops) {
  Rng rng(2);
  for (auto pad : {Padding::Replicate, Padding::Zero}) {
    for (std::size_t k : {1u, 3u, 5u}) {
      for (std::size_t stride : {1u, 2u}) {
        ConvSpec s{3, 4, k, stride, pad};
        auto x = random_tensor({2, 3, 7, 6}, rng);
        auto w = random_tensor({4, 3, k, k}, rng);
        auto b = random_tensor({4}, rng);
        auto got = kernels::conv2d(x, w, &b, s);
        auto want = naive_conv(x, w, &b, s);
        ASSERT_EQ(got.shape(), want.shape());
        for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
      }
    }
  }
}

TEST(Conv2d, BackwardIsAdjointOfForward) {
  // conv is linear in x and in w separately, so <conv(x), g> = <x, dx> = <w, dw>.
  Rng rng(3);
  for (auto pad : {Padding::Replicate, Padding::Zero}) {
    ConvSpec s{2, 3, 3, 2, pad};
    auto x = random_tensor({2, 2, 6, 5}, rng);
    auto w = random_tensor({3, 2, 3, 3}, rng);
    auto y = kernels::conv2d<double>(x, w, nullptr, s);
    auto g = random_tensor(y.shape(), rng);
    TensorD dx(x.shape()), dw(w.shape()), db(Shape{3});
    kernels::conv2d_backward(x, w, g, s, &dx, &dw, &db);
    double lhs = 0, rx = 0, rw = 0, rb = 0;
    for (std::size_t i = 0; i < y.size(); ++i) lhs += y[i] * g[i];
    for (std::size_t i = 0; i < x.size(); ++i) rx += x[i] * dx[i];
    for (std::size_t i = 0; i < w.size(); ++i) rw += w[i] * dw[i];
    EXPECT_NEAR(lhs, rw, 1e-10);
    EXPECT_NEAR(lhs, rx, 1e-10);
    for (std::size_t i = 0; i < g.size(); ++i) rb += g[i];
    EXPECT_NEAR(db[0] + db[1] + db[2], rb, 1e-10);
  }
}

TEST(Conv2d, RejectsMismatchedChannels) {
  ConvSpec s{3, 2, 3};
  TensorD x(Shape{1, 2, 4, 4});
  TensorD w(Shape{2, 3, 3, 3});
  EXPECT_THROW(kernels::conv2d<double>(x, w, nullptr, s), ShapeError);
}

TEST(PixelShuffle, FollowsChannelToSpaceIndexMap) {
  const std::size_t r = 2, C = 2, H = 2, W = 3;
  TensorD x(Shape{1, C * r * r, H, W});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = double(i);
  auto y = kernels::pixel_shuffle(x, r);
  ASSERT_EQ(y.shape(), (Shape{1, C, H * r, W * r}));
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t h = 0; h < H * r; ++h)
      for (std::size_t w = 0; w < W * r; ++w)
        EXPECT_EQ(y.at(0, c, h, w), x.at(0, c * r * r + (h % r) * r + (w % r), h / r, w / r));
  EXPECT_EQ(kernels::pixel_unshuffle(y, r), x);
}

TEST(BilinearSample, IntegerOffsetsShiftWithEdgeClamp) {
  Rng rng(4);
  auto x = random_tensor({1, 2, 5, 6}, rng);
  TensorD off(Shape{1, 4, 5, 6});
  for (std::size_t h = 0; h < 5; ++h)
    for (std::size_t w = 0; w < 6; ++w) {
      off.at(0, 0, h, w) = 2.0;   // dx of channel 0
      off.at(0, 3, h, w) = -1.0;  // dy of channel 1
    }
  auto y = kernels::bilinear_sample(x, off);
  for (long h = 0; h < 5; ++h)
    for (long w = 0; w < 6; ++w) {
      EXPECT_DOUBLE_EQ(y.at(0, 0, h, w), x.at(0, 0, h, std::min(w + 2, 5L)));
      EXPECT_DOUBLE_EQ(y.at(0, 1, h, w), x.at(0, 1, std::max(h - 1, 0L), w));
    }
}

TEST(BilinearSample, FractionalOffsetInterpolates) {
  TensorD x(Shape{1, 1, 1, 3}, std::vector<double>{0.0, 10.0, 30.0});
  TensorD off(Shape{1, 2, 1, 3});
  for (std::size_t w = 0; w < 3; ++w) off.at(0, 0, 0, w) = 0.25;
  auto y = kernels::bilinear_sample(x, off);
  EXPECT_DOUBLE_EQ(y[0], 2.5);
  EXPECT_DOUBLE_EQ(y[1], 15.0);
  EXPECT_DOUBLE_EQ(y[2], 30.0);
}

TEST(BatchNorm, TrainingNormalizesAndUpdatesRunningStats) {
  Rng rng(5);
  auto x = random_tensor({4, 2, 3, 3}, rng);
  TensorD gamma(Shape{2}, 1.0), beta(Shape{2}, 0.0), rm(Shape{2}), rv(Shape{2}, 1.0);
  kernels::BatchNormSaved<double> saved;
  auto y = kernels::batch_norm(x, gamma, beta, rm, rv, true, 0.1, 1e-5, &saved);
  for (std::size_t c = 0; c < 2; ++c) {
    double s = 0, s2 = 0, xs = 0, xs2 = 0;
    const double n = 36;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t i = 0; i < 9; ++i) {
        double v = y.at(b, c, i / 3, i % 3), u = x.at(b, c, i / 3, i % 3);
        s += v, s2 += v * v, xs += u, xs2 += u * u;
      }
    EXPECT_NEAR(s / n, 0.0, 1e-12);
    EXPECT_NEAR(s2 / n, 1.0, 1e-3);
    const double mean = xs / n, var_unbiased = (xs2 - n * mean * mean) / (n - 1);
    EXPECT_NEAR(rm[c], 0.1 * mean, 1e-12);
    EXPECT_NEAR(rv[c], 0.9 + 0.1 * var_unbiased, 1e-12);
  }
}

TEST(ElemPow, RejectsNonPositiveExponent) {
  TensorD x(Shape{2}, 2.0);
  EXPECT_THROW(kernels::elem_pow(x, 0), Error);
  EXPECT_EQ(kernels::elem_pow(x, 3)[1], 8.0);
}
