#include "paon/models.hpp"

#include <fstream>

#include "paon/data.hpp"
#include "paon/random.hpp"

namespace paon {

Activation parse_activation(const std::string& s) {
  if (s == "none") return Activation::None;
  if (s == "relu") return Activation::ReLU;
  if (s == "gelu") return Activation::GELU;
  throw Error("unknown activation '" + s + "' (none, relu, gelu)");
}

LayerFamily parse_family(const std::string& s) {
  if (s == "classic") return LayerFamily::Classic;
  if (s == "vanilla") return LayerFamily::Vanilla;
  if (s == "smoothed") return LayerFamily::Smoothed;
  throw Error("unknown layer family '" + s + "' (classic, vanilla, smoothed)");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::None: return "none";
    case Activation::ReLU: return "relu";
    case Activation::GELU: return "gelu";
  }
  return "?";
}

std::string to_string(LayerFamily f) {
  switch (f) {
    case LayerFamily::Classic: return "classic";
    case LayerFamily::Vanilla: return "vanilla";
    case LayerFamily::Smoothed: return "smoothed";
  }
  return "?";
}

template <typename T>
Var<T> activate(Activation a, const Var<T>& x) {
  switch (a) {
    case Activation::None: return x;
    case Activation::ReLU: return ops::relu(x);
    case Activation::GELU: return ops::gelu(x);
  }
  return x;
}

template <typename T>
std::unique_ptr<ConvLayer<T>> make_conv_layer(const std::string& name, const NeuronSpec& neuron,
                                              const ConvSpec& spec, bool classic_bias) {
  if (neuron.family == LayerFamily::Classic) return std::make_unique<Conv2d<T>>(name, spec, classic_bias);
  const auto form = neuron.family == LayerFamily::Vanilla ? PaonForm::Vanilla : PaonForm::Smoothed;
  auto layer = std::make_unique<PaLaConv<T>>(name, neuron.degree, spec, form, neuron.shifter);
  layer->set_init_gain(neuron.init_gain);
  return layer;
}

namespace {

template <typename T>
void append(ParamList<T>& out, ParamList<T> more) {
  out.insert(out.end(), more.begin(), more.end());
}

template <typename T>
NamedTensors<T> named(const ParamList<T>& params) {
  NamedTensors<T> out;
  for (auto* p : params) out.emplace_back(p->name, &p->value);
  return out;
}

std::size_t upsampler_stages(std::size_t scale) {
  if (scale == 2) return 1;
  if (scale == 4) return 2;
  throw Error("SR scale must be 2 or 4");
}

}  // namespace

// ---- SrNet -----------------------------------------------------------------------

SrNetConfig padenet_id_config(std::size_t channels, std::size_t blocks, PaonDegree degree) {
  SrNetConfig cfg;
  cfg.channels = channels;
  cfg.blocks = blocks;
  cfg.width = 1;
  cfg.body = NeuronSpec{LayerFamily::Smoothed, degree, std::nullopt};
  cfg.block_activation = Activation::None;
  cfg.upsampler_activation = Activation::None;
  return cfg;
}

SrNetConfig resnet_gelu_config(std::size_t channels, std::size_t blocks, std::size_t width) {
  SrNetConfig cfg;
  cfg.channels = channels;
  cfg.blocks = blocks;
  cfg.width = width;
  cfg.body = NeuronSpec{LayerFamily::Classic, {1, 0}, std::nullopt};
  cfg.block_activation = Activation::GELU;
  cfg.upsampler_activation = Activation::GELU;
  return cfg;
}

template <typename T>
SrNet<T>::SrNet(SrNetConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  if (cfg_.channels == 0 || cfg_.width == 0) throw Error("SrNet: channels and width must be positive");
  stages_ = upsampler_stages(cfg_.scale);
  const std::size_t C = cfg_.channels, k = cfg_.kernel;
  const NeuronSpec classic{LayerFamily::Classic, {1, 0}, std::nullopt};
  Rng rng(seed);
  head_ = make_conv_layer<T>("head", classic, ConvSpec{3, C, k});
  head_->init(rng.next());
  for (std::size_t i = 0; i < cfg_.blocks; ++i) {
    const std::string prefix = "blocks." + std::to_string(i);
    Block b;
    b.first = make_conv_layer<T>(prefix + ".first", cfg_.body, ConvSpec{C, C * cfg_.width, k});
    b.second = make_conv_layer<T>(prefix + ".second", cfg_.body, ConvSpec{C * cfg_.width, C, k});
    b.first->init(rng.next());
    b.second->init(rng.next());
    b.scale = Parameter<T>(prefix + ".scale", Tensor<T>(Shape{C}, static_cast<T>(cfg_.residual_init)));
    blocks_.push_back(std::move(b));
  }
  body_end_ = make_conv_layer<T>("body_end", classic, ConvSpec{C, C, k});
  body_end_->init(rng.next());
  const std::size_t n_up = cfg_.shared_upsampler ? 1 : stages_;
  for (std::size_t i = 0; i < n_up; ++i) {
    upsamplers_.push_back(make_conv_layer<T>("upsampler." + std::to_string(i), classic, ConvSpec{C, 4 * C, k}));
    upsamplers_.back()->init(rng.next());
  }
  tail_ = make_conv_layer<T>("tail", classic, ConvSpec{C, 3, k});
  tail_->init(rng.next());
}

template <typename T>
Var<T> SrNet<T>::forward(ForwardContext<T>& ctx, const Var<T>& x) {
  require_rank(x.shape(), 4, "SrNet input");
  if (x.shape()[1] != 3) throw ShapeError("SrNet: expected 3 input channels");
  auto h = head_->forward(ctx, x);
  auto r = h;
  for (auto& b : blocks_) {
    auto y = b.first->forward(ctx, r);
    y = activate(cfg_.block_activation, y);
    y = b.second->forward(ctx, y);
    r = r + ops::mul_channel(y, ctx.tape.param(b.scale));
  }
  auto f = h + body_end_->forward(ctx, r);
  for (std::size_t s = 0; s < stages_; ++s) {
    auto& up = cfg_.shared_upsampler ? upsamplers_.front() : upsamplers_[s];
    f = ops::pixel_shuffle(activate(cfg_.upsampler_activation, up->forward(ctx, f)), 2);
  }
  return tail_->forward(ctx, f);
}

template <typename T>
ParamList<T> SrNet<T>::parameters() {
  ParamList<T> out;
  append(out, head_->parameters());
  for (auto& b : blocks_) {
    append(out, b.first->parameters());
    append(out, b.second->parameters());
    out.push_back(&b.scale);
  }
  append(out, body_end_->parameters());
  for (auto& u : upsamplers_) append(out, u->parameters());
  append(out, tail_->parameters());
  return out;
}

template <typename T>
std::size_t SrNet<T>::parameter_count() {
  return count_parameters(parameters());
}

template <typename T>
OpCountReport SrNet<T>::count_ops(const Shape& in) const {
  require_rank(in, 4, "SrNet::count_ops");
  OpCountReport rep;
  Shape s = in, t;
  rep.layers.push_back(head_->count_ops(s, &s));
  for (const auto& b : blocks_) {
    rep.layers.push_back(b.first->count_ops(s, &t));
    rep.layers.push_back(b.second->count_ops(t, &t));
  }
  rep.layers.push_back(body_end_->count_ops(s, &s));
  for (std::size_t i = 0; i < stages_; ++i) {
    const auto& up = cfg_.shared_upsampler ? upsamplers_.front() : upsamplers_[i];
    rep.layers.push_back(up->count_ops(s, &s));
    s = Shape{s[0], s[1] / 4, s[2] * 2, s[3] * 2};
  }
  rep.layers.push_back(tail_->count_ops(s, &s));
  return rep;
}

template <typename T>
NamedTensors<T> SrNet<T>::state() {
  return named(parameters());
}

// ---- ClsNet ----------------------------------------------------------------------

template <typename T>
ClsNet<T>::ClsNet(ClsNetConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  for (auto n : cfg_.stages)
    if (n == 0) throw Error("ClsNet: every stage needs at least one block");
  const NeuronSpec classic{LayerFamily::Classic, {1, 0}, std::nullopt};
  Rng rng(seed);
  NeuronSpec stem_neuron = cfg_.neuron;
  stem_neuron.shifter.reset();  // shifters only inside residual blocks
  stem_ = make_conv_layer<T>("stem", stem_neuron, ConvSpec{cfg_.in_channels, cfg_.widths[0], 3}, false);
  stem_->init(rng.next());
  stem_bn_ = std::make_unique<BatchNorm2d<T>>("stem.bn", cfg_.widths[0]);
  std::size_t in = cfg_.widths[0];
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t i = 0; i < cfg_.stages[s]; ++i) {
      const std::string prefix = "stage" + std::to_string(s + 1) + "." + std::to_string(i);
      const std::size_t out = cfg_.widths[s];
      const std::size_t stride = (s > 0 && i == 0) ? 2 : 1;
      Block b;
      b.conv1 = make_conv_layer<T>(prefix + ".conv1", cfg_.neuron, ConvSpec{in, out, 3, stride}, false);
      b.conv2 = make_conv_layer<T>(prefix + ".conv2", cfg_.neuron, ConvSpec{out, out, 3}, false);
      b.conv1->init(rng.next());
      b.conv2->init(rng.next());
      b.bn1 = std::make_unique<BatchNorm2d<T>>(prefix + ".bn1", out);
      b.bn2 = std::make_unique<BatchNorm2d<T>>(prefix + ".bn2", out);
      if (stride != 1 || in != out) {
        b.shortcut = make_conv_layer<T>(prefix + ".shortcut", classic, ConvSpec{in, out, 1, stride}, false);
        b.shortcut->init(rng.next());
        b.bn_shortcut = std::make_unique<BatchNorm2d<T>>(prefix + ".shortcut_bn", out);
      }
      blocks_.push_back(std::move(b));
      in = out;
    }
  }
  if (cfg_.pade_head) {
    pade_head_ = std::make_unique<PaLaDense<T>>("head", cfg_.head_degree, in, cfg_.classes, PaonForm::Smoothed);
    pade_head_->set_init_gain(cfg_.neuron.init_gain);
    pade_head_->init(rng.next());
  } else {
    linear_head_ = std::make_unique<Linear<T>>("head", in, cfg_.classes);
    linear_head_->init(rng.next());
  }
}

template <typename T>
Var<T> ClsNet<T>::forward(ForwardContext<T>& ctx, const Var<T>& x) {
  require_rank(x.shape(), 4, "ClsNet input");
  if (x.shape()[1] != cfg_.in_channels) throw ShapeError("ClsNet: input channel mismatch");
  const Activation act = classic() ? Activation::ReLU : Activation::None;
  auto h = activate(act, stem_bn_->forward(ctx, stem_->forward(ctx, x)));
  for (auto& b : blocks_) {
    auto y = activate(act, b.bn1->forward(ctx, b.conv1->forward(ctx, h)));
    y = b.bn2->forward(ctx, b.conv2->forward(ctx, y));
    auto skip = b.shortcut ? b.bn_shortcut->forward(ctx, b.shortcut->forward(ctx, h)) : h;
    h = activate(act, y + skip);
  }
  auto pooled = ops::global_avg_pool(h);
  return pade_head_ ? pade_head_->forward(ctx, pooled) : linear_head_->forward(ctx, pooled);
}

template <typename T>
ParamList<T> ClsNet<T>::parameters() {
  ParamList<T> out;
  append(out, stem_->parameters());
  append(out, stem_bn_->parameters());
  for (auto& b : blocks_) {
    append(out, b.conv1->parameters());
    append(out, b.bn1->parameters());
    append(out, b.conv2->parameters());
    append(out, b.bn2->parameters());
    if (b.shortcut) {
      append(out, b.shortcut->parameters());
      append(out, b.bn_shortcut->parameters());
    }
  }
  append(out, pade_head_ ? pade_head_->parameters() : linear_head_->parameters());
  return out;
}

template <typename T>
std::size_t ClsNet<T>::parameter_count() {
  return count_parameters(parameters());
}

template <typename T>
std::size_t ClsNet<T>::layer_count() const {
  return 2 + 2 * (cfg_.stages[0] + cfg_.stages[1] + cfg_.stages[2]);
}

template <typename T>
OpCountReport ClsNet<T>::count_ops(const Shape& in) const {
  require_rank(in, 4, "ClsNet::count_ops");
  OpCountReport rep;
  Shape s = in, t;
  rep.layers.push_back(stem_->count_ops(s, &s));
  for (const auto& b : blocks_) {
    if (b.shortcut) rep.layers.push_back(b.shortcut->count_ops(s, &t));
    rep.layers.push_back(b.conv1->count_ops(s, &s));
    rep.layers.push_back(b.conv2->count_ops(s, &s));
  }
  const Shape pooled{s[0], s[1]};
  rep.layers.push_back(pade_head_ ? pade_head_->count_ops(pooled) : linear_head_->count_ops(pooled));
  return rep;
}

template <typename T>
NamedTensors<T> ClsNet<T>::state() {
  auto out = named(parameters());
  auto add_bn = [&out](BatchNorm2d<T>& bn) {
    out.emplace_back(bn.name() + ".running_mean", &bn.buffers().running_mean);
    out.emplace_back(bn.name() + ".running_var", &bn.buffers().running_var);
  };
  add_bn(*stem_bn_);
  for (auto& b : blocks_) {
    add_bn(*b.bn1);
    add_bn(*b.bn2);
    if (b.bn_shortcut) add_bn(*b.bn_shortcut);
  }
  return out;
}

// ---- Checkpoints -------------------------------------------------------------------

template <typename T>
void save_checkpoint(const std::filesystem::path& dir, const std::string& manifest,
                     const NamedTensors<T>& state) {
  std::filesystem::create_directories(dir);
  write_file(dir / "manifest.txt", manifest);
  for (const auto& [name, t] : state) write_tnsr(dir / (name + ".tnsr"), *t);
}

template <typename T>
void load_checkpoint(const std::filesystem::path& dir, const NamedTensors<T>& state) {
  for (const auto& [name, t] : state) {
    auto loaded = read_tnsr<T>(dir / (name + ".tnsr"));
    if (loaded.shape() != t->shape()) {
      throw ShapeError("checkpoint tensor " + name + " has shape " + to_string(loaded.shape()) +
                       ", expected " + to_string(t->shape()));
    }
    *t = std::move(loaded);
  }
}

template <typename T>
std::vector<Tensor<T>> snapshot(const NamedTensors<T>& state) {
  std::vector<Tensor<T>> out;
  out.reserve(state.size());
  for (const auto& entry : state) out.push_back(*entry.second);
  return out;
}

template <typename T>
void restore(const NamedTensors<T>& state, const std::vector<Tensor<T>>& values) {
  if (values.size() != state.size()) throw Error("restore: snapshot size mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) *state[i].second = values[i];
}

#define PAON_INSTANTIATE_MODELS(T)                                                                 \
  template Var<T> activate<T>(Activation, const Var<T>&);                                          \
  template std::unique_ptr<ConvLayer<T>> make_conv_layer<T>(const std::string&, const NeuronSpec&, \
                                                            const ConvSpec&, bool);                \
  template class SrNet<T>;                                                                         \
  template class ClsNet<T>;                                                                        \
  template void save_checkpoint<T>(const std::filesystem::path&, const std::string&,               \
                                   const NamedTensors<T>&);                                        \
  template void load_checkpoint<T>(const std::filesystem::path&, const NamedTensors<T>&);          \
  template std::vector<Tensor<T>> snapshot<T>(const NamedTensors<T>&);                             \
  template void restore<T>(const NamedTensors<T>&, const std::vector<Tensor<T>>&);

PAON_INSTANTIATE_MODELS(float)
PAON_INSTANTIATE_MODELS(double)

}  // namespace paon
