#include "paon/data.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "paon/random.hpp"

namespace paon {

namespace {

constexpr char kMagic[4] = {'T', 'N', 'S', 'R'};
constexpr std::size_t kHeader = 8;

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename U>
U get_le(const std::string& in, std::size_t pos) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    v |= static_cast<U>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  return v;
}

template <typename T>
using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;

}  // namespace

template <typename T>
std::string encode_tnsr(const Tensor<T>& t) {
  if (t.rank() == 0) throw FormatError("TNSR: rank-0 tensors are not supported");
  if (t.rank() > 255) throw FormatError("TNSR: rank exceeds 255");
  std::string out(kMagic, 4);
  out.push_back(1);
  out.push_back(static_cast<char>(dtype_of<T>()));
  out.push_back(static_cast<char>(t.rank()));
  out.push_back(0);
  for (std::size_t d : t.shape()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw FormatError("TNSR: dimension too large");
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  }
  out.reserve(out.size() + t.size() * sizeof(T));
  for (T v : t.values()) put_le<Bits<T>>(out, std::bit_cast<Bits<T>>(v));
  return out;
}

DType tnsr_dtype(const std::string& bytes) {
  if (bytes.size() < kHeader || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("TNSR: bad magic");
  }
  if (bytes[4] != 1) throw FormatError("TNSR: unsupported version");
  const auto code = static_cast<unsigned char>(bytes[5]);
  if (code > 1) throw FormatError("TNSR: unknown dtype code");
  return static_cast<DType>(code);
}

template <typename T>
Tensor<T> decode_tnsr(const std::string& bytes) {
  if (tnsr_dtype(bytes) != dtype_of<T>()) throw FormatError("TNSR: dtype mismatch");
  const std::size_t rank = static_cast<unsigned char>(bytes[6]);
  if (rank == 0) throw FormatError("TNSR: rank 0");
  if (bytes.size() < kHeader + 4 * rank) throw FormatError("TNSR: truncated header");
  Shape shape(rank);
  std::size_t n = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    shape[i] = get_le<std::uint32_t>(bytes, kHeader + 4 * i);
    n *= shape[i];
  }
  const std::size_t offset = kHeader + 4 * rank;
  if (bytes.size() != offset + n * sizeof(T)) {
    throw FormatError(bytes.size() < offset + n * sizeof(T) ? "TNSR: truncated payload"
                                                            : "TNSR: trailing bytes");
  }
  std::vector<T> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    data[i] = std::bit_cast<T>(get_le<Bits<T>>(bytes, offset + i * sizeof(T)));
  }
  return Tensor<T>(std::move(shape), std::move(data));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

template <typename T>
void write_tnsr(const std::filesystem::path& path, const Tensor<T>& t) {
  write_file(path, encode_tnsr(t));
}

template <typename T>
Tensor<T> read_tnsr(const std::filesystem::path& path) {
  return decode_tnsr<T>(read_file(path));
}

template std::string encode_tnsr<float>(const Tensor<float>&);
template std::string encode_tnsr<double>(const Tensor<double>&);
template Tensor<float> decode_tnsr<float>(const std::string&);
template Tensor<double> decode_tnsr<double>(const std::string&);
template void write_tnsr<float>(const std::filesystem::path&, const Tensor<float>&);
template void write_tnsr<double>(const std::filesystem::path&, const Tensor<double>&);
template Tensor<float> read_tnsr<float>(const std::filesystem::path&);
template Tensor<double> read_tnsr<double>(const std::filesystem::path&);

// ---- PPM ----------------------------------------------------------------------

namespace {

std::size_t ppm_field(const std::string& s, std::size_t& pos) {
  for (;;) {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos < s.size() && s[pos] == '#') {
      while (pos < s.size() && s[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  if (pos >= s.size() || !std::isdigit(static_cast<unsigned char>(s[pos]))) {
    throw FormatError("PPM: malformed header");
  }
  std::size_t v = 0;
  while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
    v = v * 10 + static_cast<std::size_t>(s[pos] - '0');
    if (v > (1u << 24)) throw FormatError("PPM: header value too large");
    ++pos;
  }
  return v;
}

}  // namespace

TensorF decode_ppm(const std::string& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw FormatError("PPM: not a P6 file");
  std::size_t pos = 2;
  const std::size_t w = ppm_field(bytes, pos), h = ppm_field(bytes, pos), maxval = ppm_field(bytes, pos);
  if (maxval != 255) throw FormatError("PPM: maxval must be 255");
  if (w == 0 || h == 0) throw FormatError("PPM: empty image");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw FormatError("PPM: malformed header");
  }
  ++pos;
  if (bytes.size() - pos < w * h * 3) throw FormatError("PPM: truncated pixel data");
  TensorF img(Shape{3, h, w});
  for (std::size_t i = 0; i < w * h; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      const auto v = static_cast<unsigned char>(bytes[pos + 3 * i + c]);
      img[c * w * h + i] = static_cast<float>(v / 127.5 - 1.0);
    }
  return img;
}

std::string encode_ppm(const TensorF& img) {
  require_rank(img.shape(), 3, "encode_ppm");
  if (img.dim(0) != 3) throw ShapeError("encode_ppm: expected 3 channels");
  const std::size_t h = img.dim(1), w = img.dim(2);
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  for (std::size_t i = 0; i < w * h; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      double v = std::round((static_cast<double>(img[c * w * h + i]) + 1.0) * 127.5);
      v = std::clamp(v, 0.0, 255.0);
      out.push_back(static_cast<char>(static_cast<unsigned char>(v)));
    }
  return out;
}

TensorF load_ppm(const std::filesystem::path& path) { return decode_ppm(read_file(path)); }
void save_ppm(const std::filesystem::path& path, const TensorF& img) { write_file(path, encode_ppm(img)); }

// ---- Teacher ----------------------------------------------------------------------

double ScalarPaon::operator()(double x) const {
  if (a.empty()) throw Error("ScalarPaon: numerator needs at least a0");
  // prefix[k] = P_k(x), qprefix[l] = Q_l(x)
  std::vector<double> P(a.size()), Q(b.size() + 1);
  double xp = 1.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    P[k] = (k ? P[k - 1] : 0.0) + a[k] * xp;
    xp *= x;
  }
  Q[0] = 1.0;
  xp = x;
  for (std::size_t l = 1; l <= b.size(); ++l) {
    Q[l] = Q[l - 1] + b[l - 1] * xp;
    xp *= x;
  }
  const std::size_t Kk = a.size() - 1, Ll = b.size();
  if (Ll == 0) return P[Kk];
  if (!smoothed) return P[Kk] / Q[Ll];
  const double pk1 = Kk >= 1 ? P[Kk - 1] : 0.0;
  return (Q[Ll] * P[Kk] + Q[Ll - 1] * pk1) / (Q[Ll] * Q[Ll] + Q[Ll - 1] * Q[Ll - 1]);
}

Samples1d gen_teacher_1d(std::size_t n, const ScalarPaon& teacher, double lo, double hi) {
  if (n < 2) throw Error("gen_teacher_1d: need at least two samples");
  if (!(hi > lo)) throw Error("gen_teacher_1d: empty interval");
  Samples1d s;
  s.x.resize(n);
  s.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    s.x[i] = i + 1 == n ? hi : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    s.y[i] = teacher(s.x[i]);
  }
  return s;
}

std::pair<Samples1d, Samples1d> split_samples(const Samples1d& s, double test_fraction,
                                              std::uint64_t seed) {
  const std::size_t n = s.x.size();
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  std::vector<bool> is_test(n, false);
  for (std::size_t i = 0; i < n_test; ++i) is_test[idx[i]] = true;
  Samples1d train, test;
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = is_test[i] ? test : train;
    dst.x.push_back(s.x[i]);
    dst.y.push_back(s.y[i]);
  }
  return {train, test};
}

// ---- SR textures -------------------------------------------------------------------

namespace {

double cubic(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

struct Taps {
  std::vector<long> index;
  std::vector<double> weight;
};

// Resampling taps for each output position along one axis.
std::vector<Taps> downsample_taps(std::size_t in, std::size_t factor) {
  const std::size_t out = in / factor;
  const double s = static_cast<double>(factor);
  std::vector<Taps> taps(out);
  for (std::size_t i = 0; i < out; ++i) {
    const double center = (static_cast<double>(i) + 0.5) * s - 0.5;
    const long lo = static_cast<long>(std::floor(center - 2.0 * s));
    const long hi = static_cast<long>(std::ceil(center + 2.0 * s));
    double total = 0.0;
    for (long j = lo; j <= hi; ++j) {
      const double w = cubic((static_cast<double>(j) - center) / s);
      if (w == 0.0) continue;
      taps[i].index.push_back(std::clamp(j, 0L, static_cast<long>(in) - 1));
      taps[i].weight.push_back(w);
      total += w;
    }
    for (auto& w : taps[i].weight) w /= total;
  }
  return taps;
}

float quantize8(double v) {
  v = std::clamp(v, -1.0, 1.0);
  return static_cast<float>(std::round((v + 1.0) * 127.5) / 127.5 - 1.0);
}

bool inside_polygon(const std::vector<std::array<double, 2>>& poly, double x, double y) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a[1] > y) != (b[1] > y) && x < (b[0] - a[0]) * (y - a[1]) / (b[1] - a[1]) + a[0]) in = !in;
  }
  return in;
}

TensorF make_texture(std::size_t size, Rng& rng) {
  const double S = static_cast<double>(size);
  std::array<double, 3> offset{};
  for (auto& o : offset) o = rng.uniform(-0.3, 0.3);
  struct Wave {
    double amp, freq, cos_t, sin_t, phase;
    std::array<double, 3> tint;
  };
  std::vector<Wave> waves(2 + rng.below(3));
  for (auto& w : waves) {
    w.amp = rng.uniform(0.2, 0.45);
    w.freq = rng.uniform(0.03, 0.3);
    const double theta = rng.uniform(0.0, std::numbers::pi);
    w.cos_t = std::cos(theta);
    w.sin_t = std::sin(theta);
    w.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (auto& t : w.tint) t = rng.uniform(0.4, 1.0);
  }
  struct Polygon {
    std::vector<std::array<double, 2>> pts;
    std::array<double, 3> color;
  };
  std::vector<Polygon> polys(1 + rng.below(3));
  for (auto& p : polys) {
    const double cx = rng.uniform(0.0, S), cy = rng.uniform(0.0, S);
    const double radius = rng.uniform(0.1, 0.35) * S;
    const std::size_t nv = 3 + rng.below(4);
    std::vector<double> angles(nv);
    for (auto& a : angles) a = rng.uniform(0.0, 2.0 * std::numbers::pi);
    std::sort(angles.begin(), angles.end());
    for (double a : angles) {
      const double r = radius * rng.uniform(0.6, 1.0);
      p.pts.push_back({cx + r * std::cos(a), cy + r * std::sin(a)});
    }
    for (auto& c : p.color) c = rng.uniform(-0.9, 0.9);
  }
  TensorF img(Shape{3, size, size});
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      std::array<double, 3> v = offset;
      for (const auto& w : waves) {
        const double s = w.amp * std::sin(2.0 * std::numbers::pi * w.freq *
                                               (double(x) * w.cos_t + double(y) * w.sin_t) + w.phase);
        for (int c = 0; c < 3; ++c) v[c] += w.tint[c] * s;
      }
      for (const auto& p : polys) {
        if (!inside_polygon(p.pts, double(x) + 0.5, double(y) + 0.5)) continue;
        for (int c = 0; c < 3; ++c) v[c] = 0.7 * p.color[c] + 0.3 * v[c];
      }
      for (int c = 0; c < 3; ++c) img[(std::size_t(c) * size + y) * size + x] = quantize8(v[c]);
    }
  return img;
}

}  // namespace

TensorF bicubic_downsample(const TensorF& img, std::size_t factor) {
  require_rank(img.shape(), 3, "bicubic_downsample");
  if (factor == 0) throw Error("bicubic_downsample: factor must be positive");
  const std::size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  if (H % factor || W % factor) throw ShapeError("bicubic_downsample: size not divisible by factor");
  const std::size_t h = H / factor, w = W / factor;
  const auto tx = downsample_taps(W, factor), ty = downsample_taps(H, factor);
  TensorF out(Shape{C, h, w});
  std::vector<double> rows(H * w);
  for (std::size_t c = 0; c < C; ++c) {
    const float* src = img.data() + c * H * W;
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        double s = 0.0;
        for (std::size_t t = 0; t < tx[x].index.size(); ++t) s += tx[x].weight[t] * src[y * W + tx[x].index[t]];
        rows[y * w + x] = s;
      }
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        double s = 0.0;
        for (std::size_t t = 0; t < ty[y].index.size(); ++t) s += ty[y].weight[t] * rows[ty[y].index[t] * w + x];
        out[(c * h + y) * w + x] = quantize8(s);
      }
  }
  return out;
}

std::vector<SrPair> gen_sr_textures(std::size_t count, std::size_t size, std::size_t scale,
                                    std::uint64_t seed) {
  if (scale == 0 || size % scale != 0) throw Error("gen_sr_textures: size must be divisible by scale");
  Rng rng(seed);
  std::vector<SrPair> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SrPair p;
    p.hr = make_texture(size, rng);
    p.lr = bicubic_downsample(p.hr, scale);
    p.scale = scale;
    out.push_back(std::move(p));
  }
  return out;
}

// ---- CIFAR-10 ---------------------------------------------------------------------

namespace {

constexpr std::size_t kCifarRecord = 3073;

std::vector<std::string> cifar_files(const std::string& split) {
  if (split == "train") {
    return {"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin",
            "data_batch_5.bin"};
  }
  if (split == "test") return {"test_batch.bin"};
  throw Error("CIFAR-10: split must be 'train' or 'test'");
}

}  // namespace

bool cifar10_available(const std::filesystem::path& dir, const std::string& split) {
  for (const auto& f : cifar_files(split)) {
    if (!std::filesystem::is_regular_file(dir / f)) return false;
  }
  return true;
}

LabeledImages load_cifar10_bin(const std::filesystem::path& dir, const std::string& split,
                               std::size_t limit) {
  std::vector<float> pixels;
  std::vector<int> labels;
  for (const auto& f : cifar_files(split)) {
    if (limit && labels.size() >= limit) break;
    const auto path = dir / f;
    if (!std::filesystem::is_regular_file(path)) throw Error("CIFAR-10: missing " + path.string());
    const std::string bytes = read_file(path);
    if (bytes.empty() || bytes.size() % kCifarRecord != 0) {
      throw FormatError("CIFAR-10: " + path.string() + " is not a whole number of records");
    }
    for (std::size_t r = 0; r < bytes.size() / kCifarRecord; ++r) {
      if (limit && labels.size() >= limit) break;
      const std::size_t base = r * kCifarRecord;
      const int label = static_cast<unsigned char>(bytes[base]);
      if (label > 9) throw FormatError("CIFAR-10: label out of range in " + path.string());
      labels.push_back(label);
      for (std::size_t i = 1; i < kCifarRecord; ++i) {
        pixels.push_back(static_cast<float>(static_cast<unsigned char>(bytes[base + i]) / 127.5 - 1.0));
      }
    }
  }
  LabeledImages out;
  out.images = TensorF(Shape{labels.size(), 3, 32, 32}, std::move(pixels));
  out.labels = std::move(labels);
  return out;
}

// ---- Synthetic shapes -----------------------------------------------------------

LabeledImages gen_shapes(std::size_t count, std::size_t size, std::uint64_t seed) {
  if (size < 8) throw Error("gen_shapes: size must be at least 8");
  Rng rng(seed);
  const double S = static_cast<double>(size);
  LabeledImages out;
  out.images = TensorF(Shape{count, 3, size, size});
  out.labels.resize(count);
  for (std::size_t n = 0; n < count; ++n) {
    const int label = static_cast<int>(n % kShapeClasses);
    out.labels[n] = label;
    std::array<double, 3> bg{}, fg{}, grad{};
    for (int c = 0; c < 3; ++c) {
      bg[c] = rng.uniform(-0.8, 0.8);
      const double delta = rng.uniform(0.5, 1.2) * (rng.coin() ? 1.0 : -1.0);
      fg[c] = std::clamp(bg[c] + delta, -1.0, 1.0);
      grad[c] = rng.uniform(-0.3, 0.3);
    }
    const double cx = rng.uniform(0.35, 0.65) * S, cy = rng.uniform(0.35, 0.65) * S;
    const double r = rng.uniform(0.22, 0.4) * S;
    const double period = rng.uniform(3.0, 6.0);
    const double rot = rng.uniform(-0.4, 0.4);
    const double noise = rng.uniform(0.02, 0.12);
    const double cr = std::cos(rot), sr = std::sin(rot);
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const double dx0 = double(x) + 0.5 - cx, dy0 = double(y) + 0.5 - cy;
        const double dx = cr * dx0 + sr * dy0, dy = -sr * dx0 + cr * dy0;
        const double d = std::hypot(dx, dy);
        bool on = false;
        switch (label) {
          case 0: on = d < r; break;                                       // disc
          case 1: on = std::abs(dx) < 0.8 * r && std::abs(dy) < 0.8 * r; break;  // square
          case 2: on = dy < 0.6 * r && dy > -0.9 * r + 1.8 * std::abs(dx); break;  // triangle
          case 3: on = d < r && d > 0.6 * r; break;                        // ring
          case 4: on = (std::abs(dx) < 0.25 * r && std::abs(dy) < r) ||
                       (std::abs(dy) < 0.25 * r && std::abs(dx) < r); break;     // plus
          case 5: on = d < r && std::fmod(dy + 100 * period, period) < period / 2; break;
          case 6: on = d < r && std::fmod(dx + 100 * period, period) < period / 2; break;
          case 7: on = d < r && std::fmod(dx + dy + 200 * period, period) < period / 2; break;
          case 8: on = d < r && ((int(std::floor(dx / period)) + int(std::floor(dy / period))) & 1); break;
          default: on = (std::abs(std::abs(dx) - std::abs(dy)) < 0.25 * r) && d < r; break;  // X
        }
        for (int c = 0; c < 3; ++c) {
          double v = on ? fg[c] : bg[c] + grad[c] * (double(x) - S / 2) / S;
          v += noise * rng.normal();
          out.images.at(n, c, y, x) = static_cast<float>(std::clamp(v, -1.0, 1.0));
        }
      }
  }
  return out;
}

}  // namespace paon
