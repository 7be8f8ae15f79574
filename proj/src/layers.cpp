#include "paon/layers.hpp"

#include <cmath>
#include <cstdlib>

#include "paon/random.hpp"

namespace paon {

void PaonDegree::validate(bool smoothed) const {
  if (K < 0 || L < 0 || K + L < 1) throw Error("invalid Paon degree " + str());
  if (smoothed && L != 0 && std::abs(K - L) > 1) {
    throw Error("smoothed Paon needs |K - L| <= 1 or L == 0, got " + str());
  }
}

std::string PaonDegree::str() const {
  return "[" + std::to_string(K) + "/" + std::to_string(L) + "]";
}

NeuronFamily reduce_config(PaonDegree degree, const std::optional<ShifterConfig>& shifter) {
  const bool shifted =
      shifter.has_value() && !(shifter->kind == ShifterKind::KernelWise && shifter->b < 0);
  if (degree.L == 0) {
    if (degree.K == 1 && !shifted) return NeuronFamily::Ordinary;
    if (degree.K == 2 && !shifted) return NeuronFamily::Quadratic;
    if (shifted) return NeuronFamily::Super;
    return NeuronFamily::Generative;
  }
  return NeuronFamily::Pade;
}

std::string to_string(NeuronFamily f) {
  switch (f) {
    case NeuronFamily::Ordinary: return "Ordinary";
    case NeuronFamily::Quadratic: return "Quadratic";
    case NeuronFamily::Generative: return "Generative";
    case NeuronFamily::Super: return "Super";
    case NeuronFamily::Pade: return "Pade";
  }
  return "?";
}

namespace {

// Builds the vanilla or smoothed rational from the per-power terms
// num_terms[k-1] = A_k * x^k, den_terms[k-1] = B_k * x^k and the bias map p0.
template <typename T>
Var<T> combine_rational(ForwardContext<T>& ctx, const std::string& layer, PaonForm form,
                        const std::vector<Var<T>>& num_terms, const std::vector<Var<T>>& den_terms,
                        const Var<T>& p0) {
  const std::size_t K = num_terms.size();
  const std::size_t L = den_terms.size();
  std::vector<Var<T>> P{p0};
  for (std::size_t k = 0; k < K; ++k) P.push_back(P.back() + num_terms[k]);
  if (L == 0) {
    if (ctx.singularity) ctx.singularity->record(layer, 0);
    return P[K];
  }
  // Q[j] for j >= 1; Q_0 = 1 is handled implicitly.
  std::vector<Var<T>> Q{Var<T>()};
  Q.push_back(ops::add_scalar(den_terms[0], 1.0));
  for (std::size_t k = 1; k < L; ++k) Q.push_back(Q.back() + den_terms[k]);

  if (form == PaonForm::Vanilla) {
    if (ctx.singularity) {
      ctx.singularity->record(
          layer, singularity_scan<T>(Q[L].value().values(), ctx.singularity->threshold()));
    }
    std::size_t clamps = 0;
    auto out = ops::guarded_div(P[K], Q[L], kDenominatorClamp, &clamps);
    if (ctx.singularity) ctx.singularity->record_clamps(clamps);
    return out;
  }

  Var<T> num = Q[L] * P[K];
  if (K >= 1) num = num + (L == 1 ? P[K - 1] : Q[L - 1] * P[K - 1]);
  Var<T> den = L == 1 ? ops::add_scalar(Q[L] * Q[L], 1.0) : Q[L] * Q[L] + Q[L - 1] * Q[L - 1];
  if (ctx.singularity) {
    ctx.singularity->record(
        layer, singularity_scan<T>(den.value().values(), ctx.singularity->threshold()));
  }
  return ops::div(num, den);
}

template <typename T>
void uniform_fill(Tensor<T>& t, double bound, Rng& rng) {
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
std::vector<Parameter<T>> make_weights(const std::string& prefix, int count, const Shape& shape) {
  std::vector<Parameter<T>> out;
  for (int k = 1; k <= count; ++k) {
    out.emplace_back(prefix + std::to_string(k), Tensor<T>(shape));
  }
  return out;
}

template <typename T>
void fill_weights(std::vector<Parameter<T>>& num, std::vector<Parameter<T>>& den, double bound,
                  double gain, Rng& rng) {
  for (std::size_t k = 0; k < num.size(); ++k) {
    if (k == 0) {
      uniform_fill(num[k].value, bound, rng);
    } else if (gain > 0) {
      uniform_fill(num[k].value, gain * bound, rng);
    } else {
      num[k].value.fill(T{0});
    }
  }
  for (auto& b : den) {
    if (gain > 0) {
      uniform_fill(b.value, gain * bound, rng);
    } else {
      b.value.fill(T{0});
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// PaLaConv

template <typename T>
PaLaConv<T>::PaLaConv(std::string name, PaonDegree degree, ConvSpec spec, PaonForm form,
                      std::optional<ShifterConfig> shifter)
    : name_(std::move(name)), degree_(degree), spec_(spec), form_(form) {
  degree_.validate(form_ == PaonForm::Smoothed);
  spec_.validate();
  const Shape wshape{spec_.out_channels, spec_.in_channels, spec_.kernel, spec_.kernel};
  numerator_ = make_weights<T>(name_ + ".A", degree_.K, wshape);
  denominator_ = make_weights<T>(name_ + ".B", degree_.L, wshape);
  bias_ = Parameter<T>(name_ + ".a0", Tensor<T>(Shape{spec_.out_channels}));
  if (shifter) shifter_ = std::make_unique<Shifter<T>>(name_ + ".shifter", *shifter, spec_.in_channels);
}

template <typename T>
void PaLaConv<T>::init(std::uint64_t seed) {
  Rng rng(seed);
  const double bound = std::sqrt(1.0 / static_cast<double>(spec_.in_channels * spec_.kernel * spec_.kernel));
  fill_weights(numerator_, denominator_, bound, init_gain_, rng);
  bias_.value.fill(T{0});
  if (shifter_) {
    for (auto* p : shifter_->parameters()) p->value.fill(T{0});
  }
}

template <typename T>
Var<T> PaLaConv<T>::forward(ForwardContext<T>& ctx, const Var<T>& x) {
  require_rank(x.shape(), 4, "PaLaConv input");
  Var<T> xs = shifter_ ? shifter_->forward(ctx, x) : x;
  const int maxk = std::max(degree_.K, degree_.L);
  std::vector<Var<T>> powers;
  for (int k = 1; k <= maxk; ++k) powers.push_back(k == 1 ? xs : ops::pow(xs, k));

  std::vector<Var<T>> num_terms, den_terms;
  for (int k = 1; k <= degree_.K; ++k) {
    num_terms.push_back(ops::conv2d(powers[k - 1], ctx.tape.param(numerator(k)), std::optional<Var<T>>{}, spec_));
  }
  for (int k = 1; k <= degree_.L; ++k) {
    den_terms.push_back(ops::conv2d(powers[k - 1], ctx.tape.param(denominator(k)), std::optional<Var<T>>{}, spec_));
  }
  const Shape out_shape{x.shape()[0], spec_.out_channels, spec_.out_extent(x.shape()[2]),
                        spec_.out_extent(x.shape()[3])};
  auto p0 = ops::add_channel_bias(ctx.tape.constant(Tensor<T>(out_shape)), ctx.tape.param(bias_));
  return combine_rational(ctx, name_, form_, num_terms, den_terms, p0);
}

template <typename T>
ParamList<T> PaLaConv<T>::parameters() {
  ParamList<T> out;
  for (auto& p : numerator_) out.push_back(&p);
  for (auto& p : denominator_) out.push_back(&p);
  out.push_back(&bias_);
  if (shifter_) {
    for (auto* p : shifter_->parameters()) out.push_back(p);
  }
  return out;
}

template <typename T>
std::size_t PaLaConv<T>::parameter_count() const {
  std::size_t n = bias_.size();
  for (const auto& p : numerator_) n += p.size();
  for (const auto& p : denominator_) n += p.size();
  if (shifter_) {
    for (auto* p : const_cast<Shifter<T>&>(*shifter_).parameters()) n += p->size();
  }
  return n;
}

template <typename T>
LayerOps PaLaConv<T>::count_ops(const Shape& in, Shape* out) const {
  require_rank(in, 4, "PaLaConv::count_ops");
  const std::uint64_t N = in[0], Ci = in[1];
  const std::uint64_t Ho = spec_.out_extent(in[2]), Wo = spec_.out_extent(in[3]);
  const std::uint64_t Co = spec_.out_channels, k = spec_.kernel;
  const std::uint64_t KL = static_cast<std::uint64_t>(degree_.K + degree_.L);
  LayerOps ops;
  if (shifter_) ops = shifter_->count_ops(in);
  ops.layer = name_;
  ops.multiplications = N * KL * Ci * k * k * Wo * Ho * Co;
  if (degree_.L > 0) {
    ops.divisions = N * Wo * Ho * Co;
    if (form_ == PaonForm::Smoothed) ops.aux_tensor_ops = N * 4 * Wo * Ho * Co;
  }
  if (out) *out = Shape{in[0], spec_.out_channels, Ho, Wo};
  return ops;
}

// ---------------------------------------------------------------------------
// PaLaDense

template <typename T>
PaLaDense<T>::PaLaDense(std::string name, PaonDegree degree, std::size_t in_features,
                        std::size_t out_features, PaonForm form)
    : name_(std::move(name)), degree_(degree), in_(in_features), out_(out_features), form_(form) {
  degree_.validate(form_ == PaonForm::Smoothed);
  numerator_ = make_weights<T>(name_ + ".A", degree_.K, Shape{out_, in_});
  denominator_ = make_weights<T>(name_ + ".B", degree_.L, Shape{out_, in_});
  bias_ = Parameter<T>(name_ + ".a0", Tensor<T>(Shape{out_}));
}

template <typename T>
void PaLaDense<T>::init(std::uint64_t seed) {
  Rng rng(seed);
  const double bound = std::sqrt(1.0 / static_cast<double>(in_));
  fill_weights(numerator_, denominator_, bound, init_gain_, rng);
  bias_.value.fill(T{0});
}

template <typename T>
Var<T> PaLaDense<T>::forward(ForwardContext<T>& ctx, const Var<T>& x) {
  require_rank(x.shape(), 2, "PaLaDense input");
  if (x.shape()[1] != in_) throw ShapeError("PaLaDense: feature count mismatch");
  const std::size_t N = x.shape()[0];
  const int maxk = std::max(degree_.K, degree_.L);
  std::vector<Var<T>> powers;
  for (int k = 1; k <= maxk; ++k) powers.push_back(k == 1 ? x : ops::pow(x, k));
  std::vector<Var<T>> num_terms, den_terms;
  for (int k = 1; k <= degree_.K; ++k) {
    num_terms.push_back(ops::linear(powers[k - 1], ctx.tape.param(numerator(k)), std::optional<Var<T>>{}));
  }
  for (int k = 1; k <= degree_.L; ++k) {
    den_terms.push_back(ops::linear(powers[k - 1], ctx.tape.param(denominator(k)), std::optional<Var<T>>{}));
  }
  auto p0 = ops::reshape(
      ops::add_channel_bias(ctx.tape.constant(Tensor<T>(Shape{N, out_, 1, 1})), ctx.tape.param(bias_)),
      Shape{N, out_});
  return combine_rational(ctx, name_, form_, num_terms, den_terms, p0);
}

template <typename T>
ParamList<T> PaLaDense<T>::parameters() {
  ParamList<T> out;
  for (auto& p : numerator_) out.push_back(&p);
  for (auto& p : denominator_) out.push_back(&p);
  out.push_back(&bias_);
  return out;
}

template <typename T>
std::size_t PaLaDense<T>::parameter_count() const {
  return static_cast<std::size_t>(degree_.K + degree_.L) * in_ * out_ + out_;
}

template <typename T>
LayerOps PaLaDense<T>::count_ops(const Shape& in) const {
  const std::uint64_t N = in.at(0);
  LayerOps ops;
  ops.layer = name_;
  ops.multiplications = N * static_cast<std::uint64_t>(degree_.K + degree_.L) * in_ * out_;
  if (degree_.L > 0) {
    ops.divisions = N * out_;
    if (form_ == PaonForm::Smoothed) ops.aux_tensor_ops = N * 4 * out_;
  }
  return ops;
}

// ---------------------------------------------------------------------------
// Classic layers

template <typename T>
Conv2d<T>::Conv2d(std::string name, ConvSpec spec, bool with_bias)
    : name_(std::move(name)), spec_(spec), with_bias_(with_bias) {
  spec_.validate();
  weight_ = Parameter<T>(name_ + ".weight",
                         Tensor<T>(Shape{spec_.out_channels, spec_.in_channels, spec_.kernel, spec_.kernel}));
  if (with_bias_) bias_ = Parameter<T>(name_ + ".bias", Tensor<T>(Shape{spec_.out_channels}));
}

template <typename T>
void Conv2d<T>::init(std::uint64_t seed) {
  Rng rng(seed);
  const double bound = std::sqrt(1.0 / static_cast<double>(spec_.in_channels * spec_.kernel * spec_.kernel));
  uniform_fill(weight_.value, bound, rng);
  if (with_bias_) bias_.value.fill(T{0});
}

template <typename T>
Var<T> Conv2d<T>::forward(ForwardContext<T>& ctx, const Var<T>& x) {
  std::optional<Var<T>> b;
  if (with_bias_) b = ctx.tape.param(bias_);
  return ops::conv2d(x, ctx.tape.param(weight_), b, spec_);
}

template <typename T>
ParamList<T> Conv2d<T>::parameters() {
  ParamList<T> out{&weight_};
  if (with_bias_) out.push_back(&bias_);
  return out;
}

template <typename T>
LayerOps Conv2d<T>::count_ops(const Shape& in, Shape* out) const {
  require_rank(in, 4, "Conv2d::count_ops");
  const std::uint64_t Ho = spec_.out_extent(in[2]), Wo = spec_.out_extent(in[3]);
  LayerOps ops;
  ops.layer = name_;
  ops.multiplications = static_cast<std::uint64_t>(in[0]) * in[1] * spec_.kernel * spec_.kernel *
                        Wo * Ho * spec_.out_channels;
  if (out) *out = Shape{in[0], spec_.out_channels, Ho, Wo};
  return ops;
}

template <typename T>
Linear<T>::Linear(std::string name, std::size_t in_features, std::size_t out_features)
    : name_(std::move(name)),
      weight_(name_ + ".weight", Tensor<T>(Shape{out_features, in_features})),
      bias_(name_ + ".bias", Tensor<T>(Shape{out_features})) {}

template <typename T>
void Linear<T>::init(std::uint64_t seed) {
  Rng rng(seed);
  uniform_fill(weight_.value, std::sqrt(1.0 / static_cast<double>(weight_.value.dim(1))), rng);
  bias_.value.fill(T{0});
}

template <typename T>
Var<T> Linear<T>::forward(ForwardContext<T>& ctx, const Var<T>& x) {
  return ops::linear(x, ctx.tape.param(weight_), std::optional<Var<T>>(ctx.tape.param(bias_)));
}

template <typename T>
ParamList<T> Linear<T>::parameters() {
  return {&weight_, &bias_};
}

template <typename T>
LayerOps Linear<T>::count_ops(const Shape& in) const {
  LayerOps ops;
  ops.layer = name_;
  ops.multiplications = static_cast<std::uint64_t>(in.at(0)) * weight_.value.size();
  return ops;
}

template <typename T>
BatchNorm2d<T>::BatchNorm2d(std::string name, std::size_t channels)
    : name_(std::move(name)),
      gamma_(name_ + ".gamma", Tensor<T>(Shape{channels}, T{1})),
      beta_(name_ + ".beta", Tensor<T>(Shape{channels})) {
  buffers_.running_mean = Tensor<T>(Shape{channels});
  buffers_.running_var = Tensor<T>(Shape{channels}, T{1});
}

template <typename T>
Var<T> BatchNorm2d<T>::forward(ForwardContext<T>& ctx, const Var<T>& x) {
  return ops::batch_norm(x, ctx.tape.param(gamma_), ctx.tape.param(beta_), buffers_, ctx.training);
}

template <typename T>
ParamList<T> BatchNorm2d<T>::parameters() {
  return {&gamma_, &beta_};
}

template class PaLaConv<float>;
template class PaLaConv<double>;
template class PaLaDense<float>;
template class PaLaDense<double>;
template class Conv2d<float>;
template class Conv2d<double>;
template class Linear<float>;
template class Linear<double>;
template class BatchNorm2d<float>;
template class BatchNorm2d<double>;

}  // namespace paon
