#include "paon/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>

#include "paon/data.hpp"

namespace paon {

template <typename T>
AdamW<T>::AdamW(ParamList<T> params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const auto* p : params_) {
    m_.emplace_back(p->size(), 0.0);
    v_.emplace_back(p->size(), 0.0);
  }
}

template <typename T>
bool AdamW<T>::step(double lr) {
  for (const auto* p : params_)
    for (T g : p->grad.values())
      if (!std::isfinite(static_cast<double>(g))) {
        ++skipped_;
        return false;
      }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = *params_[i];
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double g = static_cast<double>(p.grad[j]);
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[j] / bc1, vhat = v[j] / bc2;
      double w = static_cast<double>(p.value[j]);
      w -= lr * cfg_.weight_decay * w;
      w -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      p.value[j] = static_cast<T>(w);
    }
  }
  return true;
}

template <typename T>
void AdamW<T>::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

double cosine_lr(std::size_t t, std::size_t T, double lr0, double lr_min) {
  if (T == 0) throw Error("cosine_lr: T must be positive");
  if (t > T) throw Error("cosine_lr: t exceeds T");
  if (t == T) return lr_min;
  const double c = std::cos(std::numbers::pi * static_cast<double>(t) / static_cast<double>(T));
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + c);
}

template <typename T>
double global_grad_norm(const ParamList<T>& params) {
  double s = 0.0;
  for (const auto* p : params)
    for (T g : p->grad.values()) s += static_cast<double>(g) * static_cast<double>(g);
  return std::sqrt(s);
}

template <typename T>
double clip_grad_norm(const ParamList<T>& params, double max_norm) {
  if (!(max_norm > 0.0)) throw Error("clip_grad_norm: max_norm must be positive");
  const double norm = global_grad_norm(params);
  if (norm > max_norm && std::isfinite(norm)) {
    const double s = max_norm / norm;
    for (auto* p : params)
      for (auto& g : p->grad.values()) g = static_cast<T>(static_cast<double>(g) * s);
  }
  return norm;
}

// ---- Augmentation --------------------------------------------------------------

TensorF flip_horizontal(const TensorF& img) {
  require_rank(img.shape(), 3, "flip_horizontal");
  const std::size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  TensorF out(img.shape());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) out[(c * H + y) * W + x] = img[(c * H + y) * W + (W - 1 - x)];
  return out;
}

TensorF flip_vertical(const TensorF& img) {
  require_rank(img.shape(), 3, "flip_vertical");
  const std::size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  TensorF out(img.shape());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) out[(c * H + y) * W + x] = img[(c * H + (H - 1 - y)) * W + x];
  return out;
}

TensorF rotate90(const TensorF& img) {
  require_rank(img.shape(), 3, "rotate90");
  const std::size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  TensorF out(Shape{C, W, H});
  // out(y, x) = in(x, W - 1 - y)
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < W; ++y)
      for (std::size_t x = 0; x < H; ++x) out[(c * W + y) * H + x] = img[(c * H + x) * W + (W - 1 - y)];
  return out;
}

TensorF permute_channels(const TensorF& img, const std::vector<std::size_t>& order) {
  require_rank(img.shape(), 3, "permute_channels");
  const std::size_t C = img.dim(0), plane = img.dim(1) * img.dim(2);
  if (order.size() != C) throw ShapeError("permute_channels: order size mismatch");
  TensorF out(img.shape());
  for (std::size_t c = 0; c < C; ++c) {
    if (order[c] >= C) throw ShapeError("permute_channels: bad index");
    std::copy_n(img.data() + order[c] * plane, plane, out.data() + c * plane);
  }
  return out;
}

double signal_power(const TensorF& img) {
  double s = 0.0;
  for (float v : img.values()) s += static_cast<double>(v) * v;
  return img.size() ? s / static_cast<double>(img.size()) : 0.0;
}

double add_noise(TensorF& img, double snr_db, Rng& rng) {
  if (!std::isfinite(snr_db)) return 0.0;
  const double var = signal_power(img) / std::pow(10.0, snr_db / 10.0);
  const double sigma = std::sqrt(var);
  for (auto& v : img.values()) v = static_cast<float>(v + sigma * rng.normal());
  return var;
}

namespace {

struct GeometricDraw {
  bool hflip = false, vflip = false, rot = false, shuffle = false;
  std::vector<std::size_t> order;
};

GeometricDraw draw_geometry(const AugmentConfig& cfg, std::size_t channels, Rng& rng) {
  GeometricDraw d;
  if (cfg.flips) {
    d.hflip = rng.uniform() < cfg.probability;
    d.vflip = rng.uniform() < cfg.probability;
  }
  if (cfg.rot90) d.rot = rng.uniform() < cfg.probability;
  if (cfg.channel_shuffle && rng.uniform() < cfg.probability) {
    d.shuffle = true;
    d.order.resize(channels);
    for (std::size_t i = 0; i < channels; ++i) d.order[i] = i;
    for (std::size_t i = channels; i > 1; --i) std::swap(d.order[i - 1], d.order[rng.below(i)]);
  }
  return d;
}

void apply_geometry(TensorF& img, const GeometricDraw& d) {
  if (d.hflip) img = flip_horizontal(img);
  if (d.vflip) img = flip_vertical(img);
  if (d.rot) img = rotate90(img);
  if (d.shuffle) img = permute_channels(img, d.order);
}

}  // namespace

void augment_pair(TensorF& lr, TensorF& hr, const AugmentConfig& cfg, Rng& rng) {
  const auto d = draw_geometry(cfg, lr.dim(0), rng);
  apply_geometry(lr, d);
  apply_geometry(hr, d);
  add_noise(lr, cfg.snr_db, rng);
}

void augment_image(TensorF& img, const AugmentConfig& cfg, Rng& rng) {
  apply_geometry(img, draw_geometry(cfg, img.dim(0), rng));
  add_noise(img, cfg.snr_db, rng);
}

// ---- Loop ---------------------------------------------------------------------

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string RunLog::csv() const {
  std::ostringstream out;
  out << "iter,lr,loss,metric";
  for (const auto& l : layers) out << ",qzero_events_" << l;
  out << '\n';
  for (const auto& r : records) {
    out << r.iter << ',' << format_double(r.lr) << ',' << format_double(r.loss) << ',';
    if (!std::isnan(r.metric)) out << format_double(r.metric);
    for (std::size_t i = 0; i < layers.size(); ++i) out << ',' << (i < r.events.size() ? r.events[i] : 0);
    out << '\n';
  }
  return out.str();
}

void RunLog::write_csv(const std::filesystem::path& path) const { write_file(path, csv()); }

TrainingDiverged::TrainingDiverged(std::size_t it, std::uint64_t seed)
    : Error("non-finite loss at iteration " + std::to_string(it) + " (batch seed " +
            std::to_string(seed) + ")"),
      iter(it),
      batch_seed(seed) {}

std::uint64_t batch_seed(std::uint64_t run_seed, std::size_t iter) {
  // splitmix64 of the pair
  std::uint64_t z = run_seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(iter) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

template <typename T>
RunLog train_loop(TrainTask<T>& task, const TrainLoopConfig& cfg, SingularityLog* log,
                  std::ostream* progress) {
  if (cfg.iterations == 0) throw Error("train_loop: iterations must be positive");
  if (!(cfg.lr0 > 0.0) || cfg.lr_min < 0.0 || cfg.lr_min > cfg.lr0) {
    throw Error("train_loop: need lr0 > 0 and 0 <= lr_min <= lr0");
  }
  AdamW<T> opt(task.params, cfg.adamw);
  RunLog run;
  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    const double lr = cosine_lr(it - 1, cfg.iterations, cfg.lr0, cfg.lr_min);
    const std::uint64_t bseed = batch_seed(cfg.seed, it);
    Rng batch_rng(bseed);
    if (log) log->reset_counts();
    opt.zero_grad();
    double loss_value;
    {
      Tape<T> tape;
      auto loss = task.loss(tape, log, batch_rng);
      loss_value = static_cast<double>(loss.value().item());
      if (!std::isfinite(loss_value)) throw TrainingDiverged(it, bseed);
      tape.backward(loss);
    }
    if (cfg.clip_norm > 0.0) clip_grad_norm(task.params, cfg.clip_norm);
    opt.step(lr);

    RunRecord rec;
    rec.iter = it;
    rec.lr = lr;
    rec.loss = loss_value;
    if (log) {
      if (run.layers.size() < log->layers().size()) run.layers = log->layers();
      rec.events = log->counts();
    }
    const bool eval_now = task.evaluate && ((cfg.eval_every && it % cfg.eval_every == 0) || it == cfg.iterations);
    if (eval_now) {
      rec.metric = task.evaluate();
      if (rec.metric > run.best_metric) {
        run.best_metric = rec.metric;
        run.best_iter = it;
        if (task.on_best) task.on_best(it, rec.metric);
      }
      if (progress) {
        *progress << "iter " << it << " loss " << loss_value << " metric " << rec.metric << '\n';
      }
    }
    run.records.push_back(std::move(rec));
  }
  run.skipped_steps = opt.skipped();
  return run;
}

template class AdamW<float>;
template class AdamW<double>;
template double clip_grad_norm<float>(const ParamList<float>&, double);
template double clip_grad_norm<double>(const ParamList<double>&, double);
template double global_grad_norm<float>(const ParamList<float>&);
template double global_grad_norm<double>(const ParamList<double>&);
template RunLog train_loop<float>(TrainTask<float>&, const TrainLoopConfig&, SingularityLog*, std::ostream*);
template RunLog train_loop<double>(TrainTask<double>&, const TrainLoopConfig&, SingularityLog*, std::ostream*);

}  // namespace paon
