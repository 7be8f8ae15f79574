#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "paon/data.hpp"
#include "paon/random.hpp"

using namespace paon;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("paon_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

double cubic_oracle(double t) {
  t = std::abs(t);
  if (t <= 1) return 1.5 * t * t * t - 2.5 * t * t + 1;
  if (t < 2) return -0.5 * t * t * t + 2.5 * t * t - 4 * t + 2;
  return 0;
}

}  // namespace

TEST(Tnsr, HeaderLayoutIsByteExact) {
  TensorF t(Shape{2, 3}, std::vector<float>{1.0f, 2, 3, 4, 5, 6});
  const auto bytes = encode_tnsr(t);
  const unsigned char header[] = {'T', 'N', 'S', 'R', 1, 0, 2, 0, 2, 0, 0, 0, 3, 0, 0, 0,
                                  0x00, 0x00, 0x80, 0x3F};  // then 1.0f little-endian
  ASSERT_EQ(bytes.size(), 16u + 6 * 4);
  EXPECT_EQ(std::memcmp(bytes.data(), header, sizeof(header)), 0);
  TensorD d(Shape{1}, std::vector<double>{-2.0});
  const auto db = encode_tnsr(d);
  EXPECT_EQ(static_cast<unsigned char>(db[5]), 1);
  EXPECT_EQ(static_cast<unsigned char>(db.back()), 0xC0);  // sign + exponent of -2.0
}

TEST(Tnsr, RoundTripIsBitwise) {
  Rng rng(1);
  TensorD t(Shape{3, 1, 4, 2});
  for (auto& v : t.values()) v = rng.normal() * 1e10;
  t[0] = -0.0;
  t[1] = std::numeric_limits<double>::denorm_min();
  const auto back = decode_tnsr<double>(encode_tnsr(t));
  ASSERT_EQ(back.shape(), t.shape());
  EXPECT_EQ(std::memcmp(back.data(), t.data(), t.size() * sizeof(double)), 0);

  auto dir = temp_dir("tnsr");
  TensorF f(Shape{5}, std::vector<float>{1.5f, -0.0f, 3e-38f, 7.0f, -1e30f});
  write_tnsr(dir / "f.tnsr", f);
  const auto fb = read_tnsr<float>(dir / "f.tnsr");
  EXPECT_EQ(std::memcmp(fb.data(), f.data(), f.size() * sizeof(float)), 0);
}

TEST(Tnsr, RejectsMalformedInput) {
  EXPECT_THROW(encode_tnsr(TensorF()), FormatError);  // rank 0
  auto good = encode_tnsr(TensorF(Shape{2}, 1.0f));
  auto bad_magic = good;
  bad_magic.replace(0, 4, "XXXX");
  EXPECT_THROW(decode_tnsr<float>(bad_magic), FormatError);
  EXPECT_THROW(decode_tnsr<float>(good.substr(0, good.size() - 1)), FormatError);
  EXPECT_THROW(decode_tnsr<float>(good + "x"), FormatError);
  EXPECT_THROW(decode_tnsr<double>(good), FormatError);
  auto rank0 = good;
  rank0[6] = 0;
  EXPECT_THROW(decode_tnsr<float>(rank0), FormatError);
  auto version = good;
  version[4] = 2;
  EXPECT_THROW(decode_tnsr<float>(version), FormatError);
  EXPECT_EQ(tnsr_dtype(good), DType::F32);
}

TEST(Ppm, HandWrittenRedBluePair) {
  std::string file = "P6\n2 1\n255\n";
  file += std::string("\xFF\x00\x00\x00\x00\xFF", 6);
  const auto img = decode_ppm(file);
  ASSERT_EQ(img.shape(), (Shape{3, 1, 2}));
  // planar (c, y, x): index c * 2 + x
  EXPECT_EQ(img[0], 1.0f);   // R of pixel 0
  EXPECT_EQ(img[4], -1.0f);  // B of pixel 0
  EXPECT_EQ(img[1], -1.0f);
  EXPECT_EQ(img[5], 1.0f);
  EXPECT_EQ(encode_ppm(img), file);
}

TEST(Ppm, EightBitRoundTripAndComments) {
  Rng rng(2);
  std::string file = "P6 # comment\n3 2\n# another\n255\n";
  for (int i = 0; i < 18; ++i) file.push_back(static_cast<char>(rng.below(256)));
  const auto img = decode_ppm(file);
  const auto again = decode_ppm(encode_ppm(img));
  EXPECT_EQ(again, img);
  auto dir = temp_dir("ppm");
  save_ppm(dir / "a.ppm", img);
  EXPECT_EQ(load_ppm(dir / "a.ppm"), img);
}

TEST(Ppm, RejectsUnsupportedFiles) {
  EXPECT_THROW(decode_ppm("P3\n1 1\n255\n0 0 0"), FormatError);
  EXPECT_THROW(decode_ppm(std::string("P6\n1 1\n65535\n") + std::string(6, '\0')), FormatError);
  EXPECT_THROW(decode_ppm("P6\n2 2\n255\n\x01\x02"), FormatError);
}

TEST(Teacher, HandEvaluatedSmoothedValue) {
  const ScalarPaon t{{0.0, 1.0}, {1.0}, true};
  EXPECT_DOUBLE_EQ(t(1.0), 0.4);
  const ScalarPaon v{{0.0, 1.0}, {1.0}, false};
  EXPECT_DOUBLE_EQ(v(1.0), 0.5);
}

TEST(Teacher, GridEndpointsAndAffineCase) {
  const ScalarPaon affine{{0.5, -2.0}, {}, true};
  const auto s = gen_teacher_1d(7, affine, -3.0, 3.0);
  EXPECT_EQ(s.x.front(), -3.0);
  EXPECT_EQ(s.x.back(), 3.0);
  for (std::size_t i = 0; i < s.x.size(); ++i) EXPECT_DOUBLE_EQ(s.y[i], 0.5 - 2.0 * s.x[i]);
  const auto [train, test] = split_samples(s, 0.3, 9);
  EXPECT_EQ(test.x.size(), 2u);
  EXPECT_EQ(train.x.size() + test.x.size(), s.x.size());
  const auto [train2, test2] = split_samples(s, 0.3, 9);
  EXPECT_EQ(test2.x, test.x);
}

TEST(Bicubic, ConstantImageIsPreserved) {
  TensorF img(Shape{3, 8, 8}, static_cast<float>(40 / 127.5 - 1.0));
  const auto lr = bicubic_downsample(img, 2);
  EXPECT_EQ(lr.shape(), (Shape{3, 4, 4}));
  for (float v : lr.values()) EXPECT_EQ(v, img[0]);
}

TEST(Bicubic, MatchesTwoDimensionalKernelOracle) {
  Rng rng(3);
  TensorF img(Shape{1, 16, 16});
  for (auto& v : img.values()) v = static_cast<float>(rng.uniform(-0.6, 0.6));
  const std::size_t s = 2;
  const auto lr = bicubic_downsample(img, s);
  for (long oy = 0; oy < 8; ++oy)
    for (long ox = 0; ox < 8; ++ox) {
      const double cy = (oy + 0.5) * s - 0.5, cx = (ox + 0.5) * s - 0.5;
      double acc = 0, wsum = 0;
      for (long y = -8; y < 24; ++y)
        for (long x = -8; x < 24; ++x) {
          const double w = cubic_oracle((y - cy) / s) * cubic_oracle((x - cx) / s);
          if (w == 0) continue;
          acc += w * img[std::clamp(y, 0L, 15L) * 16 + std::clamp(x, 0L, 15L)];
          wsum += w;
        }
      EXPECT_NEAR(lr[oy * 8 + ox], acc / wsum, 0.5 / 127.5 + 1e-6);
    }
}

TEST(SrTextures, ShapesDeterminismAndPower) {
  const auto a = gen_sr_textures(40, 32, 2, 11);
  const auto b = gen_sr_textures(40, 32, 2, 11);
  ASSERT_EQ(a.size(), 40u);
  double mean_power = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].hr.shape(), (Shape{3, 32, 32}));
    EXPECT_EQ(a[i].lr.shape(), (Shape{3, 16, 16}));
    EXPECT_EQ(a[i].hr, b[i].hr);
    EXPECT_EQ(a[i].lr, b[i].lr);
    double p = 0;
    for (float v : a[i].hr.values()) {
      EXPECT_LE(std::abs(v), 1.0f);
      p += double(v) * v;
    }
    p /= double(a[i].hr.size());
    EXPECT_GT(p, 0.0) << i;
    mean_power += p / double(a.size());
  }
  EXPECT_GE(mean_power, 0.05);
  EXPECT_LE(mean_power, 1.0);
  EXPECT_NE(gen_sr_textures(1, 32, 2, 12)[0].hr, a[0].hr);
  EXPECT_THROW(gen_sr_textures(1, 33, 2, 1), Error);
}

TEST(Cifar, LoadsBinaryRecords) {
  auto dir = temp_dir("cifar");
  auto make = [&](const std::string& name, int records, int label0) {
    std::string bytes;
    for (int r = 0; r < records; ++r) {
      bytes.push_back(static_cast<char>((label0 + r) % 10));
      for (int i = 0; i < 3072; ++i) bytes.push_back(static_cast<char>(i % 256));
    }
    write_file(dir / name, bytes);
  };
  for (int b = 1; b <= 5; ++b) make("data_batch_" + std::to_string(b) + ".bin", 30, b);
  make("test_batch.bin", 20, 0);
  EXPECT_TRUE(cifar10_available(dir, "train"));
  const auto train = load_cifar10_bin(dir, "train", 100);
  EXPECT_EQ(train.size(), 100u);
  EXPECT_EQ(train.images.shape(), (Shape{100, 3, 32, 32}));
  EXPECT_EQ(train.labels[0], 1);
  EXPECT_EQ(train.labels[30], 2);  // second file starts with its own label
  EXPECT_FLOAT_EQ(train.images.at(0, 0, 0, 0), -1.0f);
  EXPECT_FLOAT_EQ(train.images.at(0, 0, 7, 31), 1.0f);
  EXPECT_EQ(load_cifar10_bin(dir, "test").size(), 20u);
  write_file(dir / "test_batch.bin", std::string(3072, '\0'));
  EXPECT_THROW(load_cifar10_bin(dir, "test"), FormatError);
  EXPECT_THROW(load_cifar10_bin(dir / "missing", "train"), Error);
  EXPECT_FALSE(cifar10_available(dir / "missing", "train"));
}

TEST(Shapes, BalancedLabelsAndRange) {
  const auto d = gen_shapes(50, 32, 3);
  EXPECT_EQ(d.images.shape(), (Shape{50, 3, 32, 32}));
  std::vector<int> hist(10, 0);
  for (int l : d.labels) ++hist.at(static_cast<std::size_t>(l));
  for (int h : hist) EXPECT_EQ(h, 5);
  for (float v : d.images.values()) EXPECT_LE(std::abs(v), 1.0f);
  EXPECT_EQ(gen_shapes(50, 32, 3).images, d.images);
}
