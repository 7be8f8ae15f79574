#pragma once

// Serialization, image I/O and the synthetic dataset generators.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "paon/tensor.hpp"

namespace paon {

// ---- TNSR container ---------------------------------------------------------
// "TNSR" | version u8 = 1 | dtype u8 (0 f32, 1 f64) | rank u8 | reserved u8 |
// rank x u32 dims | payload, all little-endian, row-major.

template <typename T>
std::string encode_tnsr(const Tensor<T>& t);
/// Throws FormatError on a bad magic, version, dtype mismatch or truncation.
template <typename T>
Tensor<T> decode_tnsr(const std::string& bytes);
/// dtype stored in an encoded buffer.
DType tnsr_dtype(const std::string& bytes);

template <typename T>
void write_tnsr(const std::filesystem::path& path, const Tensor<T>& t);
template <typename T>
Tensor<T> read_tnsr(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

// ---- PPM (P6, maxval 255) ----------------------------------------------------

/// Decodes to a (3, H, W) tensor with value / 127.5 - 1.
TensorF decode_ppm(const std::string& bytes);
/// Encodes a (3, H, W) tensor in [-1, 1] with round-half-away and clamping.
std::string encode_ppm(const TensorF& img);
TensorF load_ppm(const std::filesystem::path& path);
void save_ppm(const std::filesystem::path& path, const TensorF& img);

// ---- Scalar teacher ----------------------------------------------------------

/// A single scalar Padé neuron y = R(x) with numerator a0..aK and denominator
/// 1 + b1 x + ... + bL x^L, evaluated in vanilla or smoothed form.
struct ScalarPaon {
  std::vector<double> a;  // a0..aK
  std::vector<double> b;  // b1..bL
  bool smoothed = true;

  [[nodiscard]] int K() const { return static_cast<int>(a.size()) - 1; }
  [[nodiscard]] int L() const { return static_cast<int>(b.size()); }
  [[nodiscard]] double operator()(double x) const;
};

struct Samples1d {
  std::vector<double> x;
  std::vector<double> y;
};

/// n points on the uniform grid over [lo, hi] (both endpoints included),
/// labelled by the teacher.
Samples1d gen_teacher_1d(std::size_t n, const ScalarPaon& teacher, double lo, double hi);

/// Seeded split of samples into (train, test) with `test_fraction` held out.
std::pair<Samples1d, Samples1d> split_samples(const Samples1d& s, double test_fraction,
                                              std::uint64_t seed);

// ---- Super-resolution textures ----------------------------------------------

struct SrPair {
  TensorF lr;  // (3, h, w)
  TensorF hr;  // (3, h * scale, w * scale)
  std::size_t scale = 2;
};

/// Antialiased bicubic downsampling of a (C, H, W) image by an integer factor
/// with the a = -0.5 kernel stretched by the factor and replicate borders.
TensorF bicubic_downsample(const TensorF& img, std::size_t factor);

/// Procedural HR images (oriented sinusoids over a colour offset plus filled
/// polygons) in [-1, 1] and their bicubic LR versions.
std::vector<SrPair> gen_sr_textures(std::size_t count, std::size_t size, std::size_t scale,
                                    std::uint64_t seed);

// ---- Classification data ----------------------------------------------------

struct LabeledImages {
  TensorF images;  // (N, 3, H, W) in [-1, 1]
  std::vector<int> labels;
  [[nodiscard]] std::size_t size() const { return labels.size(); }
};

/// CIFAR-10 binary batches: data_batch_1..5.bin (split "train") or
/// test_batch.bin (split "test"); records of 1 label byte + 3072 pixel bytes.
/// limit = 0 loads everything.
LabeledImages load_cifar10_bin(const std::filesystem::path& dir, const std::string& split,
                               std::size_t limit = 0);
/// True when every file of the split exists under dir.
bool cifar10_available(const std::filesystem::path& dir, const std::string& split);

/// Ten-class synthetic stand-in for CIFAR-10: randomly placed, sized and
/// coloured shapes and patterns over noisy backgrounds.
LabeledImages gen_shapes(std::size_t count, std::size_t size, std::uint64_t seed);

inline constexpr int kShapeClasses = 10;

}  // namespace paon
