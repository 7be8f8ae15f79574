#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "commands.hpp"
#include "common.hpp"
#include "csv.hpp"
#include "paon/metrics.hpp"
#include "paon/models.hpp"

namespace paon::cli {

namespace {

// ---- shared SR setup -------------------------------------------------------------

std::vector<KeySpec> sr_keys(const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::vector<KeySpec> keys{
      {"model", "padenet-id", "padenet-id, padenet (Padé body with GELU) or resnet-gelu"},
      {"family", "smoothed", "Padé layer form: smoothed or vanilla"},
      {"degree", "1/1", "Padé degree K/L"},
      {"shifter", "none", "none, kernel or element"},
      {"shifter_b", "0", "shift bound b"},
      {"shifter_kernel", "1", "element-wise offset-head kernel"},
      {"channels", "16", "feature channels"},
      {"blocks", "2", "residual blocks R"},
      {"width", "0", "block width multiplier (0: 2 for resnet-gelu, 1 otherwise)"},
      {"scale", "2", "upscaling factor (2 or 4)"},
      {"shared_upsampler", "false", "reuse one upsampler for every x2 stage"},
      {"residual_init", "0.1", "initial residual scale"},
      {"init_gain", "0", "init scale of higher-order Padé weights relative to A_1 (0: zero)"},
      {"train_pairs", "200", "synthetic training pairs"},
      {"test_pairs", "20", "synthetic test pairs"},
      {"hr_size", "64", "side of the synthetic HR images"},
      {"data_seed", "1", "texture generator seed"},
      {"iterations", "5000", "training iterations"},
      {"batch", "4", "batch size"},
      {"crop", "48", "HR training crop (LR crop is crop / scale)"},
      {"lr0", "1e-3", "initial learning rate"},
      {"lr_min", "1e-6", "final learning rate"},
      {"weight_decay", "0", "AdamW decoupled weight decay"},
      {"clip", "1", "gradient max-norm (<= 0 disables)"},
      {"loss", "barron", "barron or l2"},
      {"alpha", "1.5", "Barron shape"},
      {"c", "2", "Barron scale"},
      {"augment", "true", "random flips, rot90 and channel shuffle"},
      {"snr_db", "40", "Gaussian noise on the LR input (inf disables)"},
      {"eval_every", "500", "validation interval"},
      {"threshold", "0.01", "small-denominator threshold for the event counter"},
      {"seed", "0", "model and batch seed"},
  };
  for (const auto& [k, v] : overrides) {
    auto it = std::find_if(keys.begin(), keys.end(), [&](const KeySpec& s) { return s.name == k; });
    if (it == keys.end()) throw Error("internal: no SR key " + k);
    it->default_value = v;
  }
  return keys;
}

SrNetConfig sr_model_config(const Config& cfg) {
  const std::string model = cfg.str("model");
  const std::size_t C = cfg.size("channels"), R = cfg.size("blocks");
  std::size_t width = cfg.size("width");
  SrNetConfig m;
  if (model == "resnet-gelu") {
    m = resnet_gelu_config(C, R, width ? width : 2);
  } else if (model == "padenet-id" || model == "padenet") {
    m = padenet_id_config(C, R, cfg.degree("degree"));
    m.width = width ? width : 1;
    if (model == "padenet") {
      m.block_activation = Activation::GELU;
      m.upsampler_activation = Activation::GELU;
    }
    m.body.family = parse_family(cfg.str("family"));
    if (m.body.family == LayerFamily::Classic) throw UsageError("family must be smoothed or vanilla");
    m.body.shifter = parse_shifter(cfg.str("shifter"), static_cast<int>(cfg.integer("shifter_b")), cfg.size("shifter_kernel"));
    m.body.degree.validate(m.body.family == LayerFamily::Smoothed);
    m.body.init_gain = cfg.real("init_gain");
  } else {
    throw UsageError("unknown SR model '" + model + "' (padenet-id, padenet, resnet-gelu)");
  }
  m.scale = cfg.size("scale");
  m.shared_upsampler = cfg.flag("shared_upsampler");
  m.residual_init = cfg.real("residual_init");
  return m;
}

struct SrData {
  std::vector<SrPair> train, test;
};

SrData sr_data(const Config& cfg) {
  const std::size_t ntrain = cfg.size("train_pairs"), ntest = cfg.size("test_pairs");
  if (ntrain == 0 || ntest == 0) throw UsageError("train_pairs and test_pairs must be positive");
  auto all = gen_sr_textures(ntrain + ntest, cfg.size("hr_size"), cfg.size("scale"), cfg.u64("data_seed"));
  SrData d;
  d.train.assign(std::make_move_iterator(all.begin()), std::make_move_iterator(all.begin() + std::ptrdiff_t(ntrain)));
  d.test.assign(std::make_move_iterator(all.begin() + std::ptrdiff_t(ntrain)), std::make_move_iterator(all.end()));
  return d;
}

TensorF stack(const std::vector<const TensorF*>& imgs) {
  const Shape& s = imgs.front()->shape();
  TensorF out(Shape{imgs.size(), s[0], s[1], s[2]});
  auto dst = out.values().begin();
  for (const auto* img : imgs) dst = std::copy(img->values().begin(), img->values().end(), dst);
  return out;
}

TensorF crop(const TensorF& img, std::size_t y0, std::size_t x0, std::size_t size) {
  const std::size_t C = img.dim(0), W = img.dim(2);
  TensorF out(Shape{C, size, size});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) out[(c * size + y) * size + x] = img[(c * img.dim(1) + y0 + y) * W + x0 + x];
  return out;
}

struct SrEval {
  std::vector<double> psnr, ssim;
  std::vector<TensorF> outputs;
  [[nodiscard]] double mean_psnr() const { return std::accumulate(psnr.begin(), psnr.end(), 0.0) / double(psnr.size()); }
  [[nodiscard]] double mean_ssim() const { return std::accumulate(ssim.begin(), ssim.end(), 0.0) / double(ssim.size()); }
};

SrEval evaluate_sr(SrNet<float>& net, const std::vector<SrPair>& test, bool keep_outputs) {
  SrEval e;
  for (const auto& p : test) {
    Tape<float> tape;
    ForwardContext<float> ctx{tape, false, nullptr};
    const auto y = net.forward(ctx, tape.constant(stack({&p.lr}))).value();
    auto img = batch_item(y, 0);
    for (auto& v : img.values()) v = std::clamp(v, -1.0f, 1.0f);
    e.psnr.push_back(psnr_for_csv(psnr_rgb(img, p.hr)));
    e.ssim.push_back(ssim_y(img, p.hr));
    if (keep_outputs) e.outputs.push_back(std::move(img));
  }
  return e;
}

void write_sr_eval(const SrEval& e, const std::filesystem::path& path) {
  Csv csv({"image", "psnr_db", "ssim"});
  for (std::size_t i = 0; i < e.psnr.size(); ++i) csv.row(std::to_string(i), e.psnr[i], e.ssim[i]);
  csv.row("mean", e.mean_psnr(), e.mean_ssim());
  csv.write(path);
}

TrainLoopConfig loop_config(const Config& cfg) {
  TrainLoopConfig lc;
  lc.iterations = cfg.size("iterations");
  lc.lr0 = cfg.real("lr0");
  lc.lr_min = cfg.real("lr_min");
  if (!(lc.lr0 > lc.lr_min && lc.lr_min > 0)) throw UsageError("need lr0 > lr_min > 0");
  lc.adamw.weight_decay = cfg.real("weight_decay");
  lc.clip_norm = cfg.real("clip");
  lc.eval_every = cfg.size("eval_every");
  lc.seed = cfg.u64("seed");
  return lc;
}

struct SrRun {
  RunLog log;
  SrEval final_eval;
  std::size_t parameters = 0;
};

SrRun run_sr(const Config& cfg, const std::filesystem::path& out, std::ostream& log, bool keep_outputs) {
  Stopwatch clock;
  const SrNetConfig mc = sr_model_config(cfg);
  SrNet<float> net(mc, cfg.u64("seed"));
  const SrData data = sr_data(cfg);
  const std::size_t scale = mc.scale, hr_crop = cfg.size("crop"), batch = cfg.size("batch");
  if (hr_crop % scale || hr_crop > cfg.size("hr_size") || hr_crop == 0)
    throw UsageError("crop must be a positive multiple of scale no larger than hr_size");
  const std::size_t lr_crop = hr_crop / scale, lr_size = cfg.size("hr_size") / scale;
  const std::string loss = cfg.str("loss");
  if (loss != "barron" && loss != "l2") throw UsageError("loss must be barron or l2");
  const double alpha = cfg.real("alpha"), c = cfg.real("c");
  AugmentConfig aug;
  aug.flips = aug.rot90 = aug.channel_shuffle = cfg.flag("augment");
  aug.snr_db = cfg.real("snr_db");

  SrRun run;
  run.parameters = net.parameter_count();
  log << "model " << cfg.str("model") << ": " << run.parameters << " parameters\n";

  auto state = net.state();
  std::vector<TensorF> best;
  TrainTask<float> task;
  task.params = net.parameters();
  task.loss = [&](Tape<float>& tape, SingularityLog* slog, Rng& rng) {
    std::vector<TensorF> lrs, hrs;
    for (std::size_t b = 0; b < batch; ++b) {
      const auto& p = data.train[rng.below(data.train.size())];
      const std::size_t y0 = rng.below(lr_size - lr_crop + 1), x0 = rng.below(lr_size - lr_crop + 1);
      TensorF lr = crop(p.lr, y0, x0, lr_crop), hr = crop(p.hr, y0 * scale, x0 * scale, hr_crop);
      augment_pair(lr, hr, aug, rng);
      lrs.push_back(std::move(lr));
      hrs.push_back(std::move(hr));
    }
    std::vector<const TensorF*> lp, hp;
    for (std::size_t b = 0; b < batch; ++b) lp.push_back(&lrs[b]), hp.push_back(&hrs[b]);
    ForwardContext<float> ctx{tape, true, slog};
    auto pred = net.forward(ctx, tape.constant(stack(lp)));
    auto target = tape.constant(stack(hp));
    return loss == "barron" ? ops::barron_loss(pred, target, alpha, c) : ops::mse_loss(pred, target);
  };
  task.evaluate = [&] { return evaluate_sr(net, data.test, false).mean_psnr(); };
  task.on_best = [&](std::size_t it, double metric) {
    best = snapshot(state);
    log << "  iter " << it << ": test PSNR " << metric << " dB (best)\n";
  };
  SingularityLog slog(cfg.real("threshold"));
  run.log = train_loop(task, loop_config(cfg), &slog);
  if (!best.empty()) restore(state, best);
  run.final_eval = evaluate_sr(net, data.test, keep_outputs);
  run.log.write_csv(out / "train_log.csv");
  write_sr_eval(run.final_eval, out / "eval.csv");
  save_checkpoint(out / "checkpoint", cfg.manifest(), state);
  log << "best test PSNR " << run.final_eval.mean_psnr() << " dB, SSIM " << run.final_eval.mean_ssim()
      << " (iteration " << run.log.best_iter << "); " << clock.seconds() << " s\n";
  return run;
}

}  // namespace

// ---- train-sr -------------------------------------------------------------------------

std::vector<KeySpec> train_sr_keys() { return sr_keys({}); }

int cmd_train_sr(const Config& cfg, const std::filesystem::path& out, std::ostream& log) {
  const auto run = run_sr(cfg, out, log, false);
  Csv summary({"model", "parameters", "best_iter", "test_psnr_db", "test_ssim", "skipped_steps"});
  summary.row(cfg.str("model"), run.parameters, run.log.best_iter, run.final_eval.mean_psnr(),
              run.final_eval.mean_ssim(), run.log.skipped_steps);
  summary.write(out / "summary.csv");
  return kOk;
}

// ---- singularity ---------------------------------------------------------------------

std::vector<KeySpec> singularity_keys() {
  auto keys = sr_keys({{"iterations", "2000"},
                       {"channels", "8"},
                       {"train_pairs", "32"},
                       {"test_pairs", "4"},
                       {"hr_size", "32"},
                       {"crop", "24"},
                       {"eval_every", "0"}});
  keys.push_back({"bound_samples", "1000000", "smoothed [1/1] denominators evaluated for the lower bound"});
  return keys;
}

int cmd_singularity(const Config& cfg, const std::filesystem::path& out, std::ostream& log) {
  // Lower bound of the smoothed denominator with L = 1: random layers and inputs,
  // counting every denominator below 1.
  Rng rng(cfg.u64("seed"));
  const std::size_t want = cfg.size("bound_samples");
  const ConvSpec spec{4, 4, 3, 1, Padding::Replicate};
  const Shape xs{4, 4, 64, 64};
  const std::size_t per_forward = xs[0] * spec.out_channels * xs[2] * xs[3];
  std::size_t evaluated = 0;
  SingularityLog bound(1.0);
  while (evaluated < want) {
    PaLaConv<double> layer("bound", {1, 1}, spec, PaonForm::Smoothed);
    randomize(layer.parameters(), rng, 3.0);
    Tape<double> tape;
    ForwardContext<double> ctx{tape, false, &bound};
    layer.forward(ctx, tape.constant(random_tensor<double>(xs, rng, -4.0, 4.0)));
    evaluated += per_forward;
  }
  Csv b({"evaluations", "below_one"});
  b.row(evaluated, bound.total());
  b.write(out / "singularity_bound.csv");
  log << "smoothed [1/1] denominators: " << evaluated << " evaluated, " << bound.total() << " below 1\n";

  const auto run = run_sr(cfg, out, log, false);
  // The per-layer, per-iteration event counts live in train_log.csv.
  std::filesystem::copy_file(out / "train_log.csv", out / "singularity_log.csv",
                             std::filesystem::copy_options::overwrite_existing);
  std::uint64_t events = 0;
  Csv per_layer({"layer", "events"});
  for (std::size_t l = 0; l < run.log.layers.size(); ++l) {
    std::uint64_t n = 0;
    for (const auto& r : run.log.records) n += r.events[l];
    per_layer.row(run.log.layers[l], n);
    log << "  " << run.log.layers[l] << " events: " << n << "\n";
    events += n;
  }
  per_layer.write(out / "singularity_layers.csv");
  log << "events: " << events << " at threshold " << cfg.real("threshold") << "\n";
  bool ok = bound.total() == 0;
  if (cfg.str("family") == "smoothed" && cfg.str("model") != "resnet-gelu") ok = ok && events == 0;
  return ok ? kOk : kCheckFailed;
}

// ---- train-cls ----------------------------------------------------------------------

std::vector<KeySpec> train_cls_keys() {
  return {
      {"model", "paon", "paon or resnet"},
      {"stages", "auto", "blocks per stage (auto: 1,1,2 for paon, 2,2,2 for resnet)"},
      {"widths", "16,32,64", "channels per stage"},
      {"family", "smoothed", "Padé layer form for paon"},
      {"degree", "1/1", "Padé degree for paon"},
      {"shifter", "element", "none, kernel or element (paon blocks)"},
      {"shifter_b", "0", "shift bound b"},
      {"shifter_kernel", "1", "element-wise offset-head kernel"},
      {"pade_head", "false", "smoothed Padé dense head instead of a linear head"},
      {"head_degree", "1/1", "degree of the Padé head"},
      {"init_gain", "0.1", "init scale of higher-order Padé weights relative to A_1 (0: zero)"},
      {"dataset", "shapes", "shapes or cifar"},
      {"cifar_dir", "", "directory with the CIFAR-10 binary batches"},
      {"train_samples", "2000", "training samples"},
      {"test_samples", "1000", "test samples"},
      {"image_size", "32", "side of the synthetic shape images"},
      {"data_seed", "1", "synthetic data seed"},
      {"iterations", "625", "training iterations"},
      {"batch", "32", "batch size"},
      {"lr0", "1e-3", "initial learning rate"},
      {"lr_min", "1e-6", "final learning rate"},
      {"weight_decay", "5e-4", "AdamW decoupled weight decay"},
      {"clip", "1", "gradient max-norm (<= 0 disables)"},
      {"flips", "false", "random horizontal and vertical flips"},
      {"eval_every", "125", "validation interval"},
      {"seed", "0", "model and batch seed"},
  };
}

int cmd_train_cls(const Config& cfg, const std::filesystem::path& out, std::ostream& log) {
  Stopwatch clock;
  const std::string model = cfg.str("model");
  if (model != "paon" && model != "resnet") throw UsageError("model must be paon or resnet");
  const bool paon = model == "paon";
  ClsNetConfig mc;
  const std::string stages = cfg.str("stages");
  const auto st = stages == "auto" ? std::vector<std::size_t>(paon ? std::vector<std::size_t>{1, 1, 2}
                                                                   : std::vector<std::size_t>{2, 2, 2})
                                   : cfg.sizes("stages");
  const auto wd = cfg.sizes("widths");
  if (st.size() != 3 || wd.size() != 3) throw UsageError("stages and widths need three entries");
  std::copy(st.begin(), st.end(), mc.stages.begin());
  std::copy(wd.begin(), wd.end(), mc.widths.begin());
  if (paon) {
    mc.neuron = NeuronSpec{parse_family(cfg.str("family")), cfg.degree("degree"),
                           parse_shifter(cfg.str("shifter"), static_cast<int>(cfg.integer("shifter_b")),
                                         cfg.size("shifter_kernel"))};
    if (mc.neuron.family == LayerFamily::Classic) throw UsageError("family must be smoothed or vanilla");
  }
  mc.neuron.init_gain = cfg.real("init_gain");
  mc.pade_head = cfg.flag("pade_head");
  mc.head_degree = cfg.degree("head_degree");

  LabeledImages train, test;
  const std::string dataset = cfg.str("dataset");
  if (dataset == "cifar") {
    train = load_cifar10_bin(cfg.str("cifar_dir"), "train", cfg.size("train_samples"));
    test = load_cifar10_bin(cfg.str("cifar_dir"), "test", cfg.size("test_samples"));
  } else if (dataset == "shapes") {
    train = gen_shapes(cfg.size("train_samples"), cfg.size("image_size"), cfg.u64("data_seed"));
    test = gen_shapes(cfg.size("test_samples"), cfg.size("image_size"), cfg.u64("data_seed") + 1000003);
  } else {
    throw UsageError("dataset must be shapes or cifar");
  }
  if (train.size() == 0 || test.size() == 0) throw UsageError("empty dataset");

  ClsNet<float> net(mc, cfg.u64("seed"));
  const std::size_t params = net.parameter_count();
  log << "model " << model << " " << mc.stages[0] << "," << mc.stages[1] << "," << mc.stages[2] << ": "
      << net.layer_count() << " layers, " << params << " parameters, dataset " << dataset << "\n";

  const Shape& is = train.images.shape();
  const std::size_t sample = is[1] * is[2] * is[3], batch = cfg.size("batch");
  const bool flips = cfg.flag("flips");
  auto accuracy = [&] {
    std::size_t correct = 0;
    const std::size_t chunk = 100;
    for (std::size_t s = 0; s < test.size(); s += chunk) {
      const std::size_t n = std::min(chunk, test.size() - s);
      TensorF x(Shape{n, is[1], is[2], is[3]});
      std::copy_n(test.images.data() + s * sample, n * sample, x.data());
      Tape<float> tape;
      ForwardContext<float> ctx{tape, false, nullptr};
      const auto logits = net.forward(ctx, tape.constant(std::move(x))).value();
      const std::size_t K = logits.dim(1);
      for (std::size_t i = 0; i < n; ++i) {
        const float* row = logits.data() + i * K;
        const auto arg = static_cast<int>(std::max_element(row, row + K) - row);
        correct += arg == test.labels[s + i];
      }
    }
    return 100.0 * double(correct) / double(test.size());
  };

  auto state = net.state();
  std::vector<TensorF> best;
  TrainTask<float> task;
  task.params = net.parameters();
  task.loss = [&](Tape<float>& tape, SingularityLog* slog, Rng& rng) {
    TensorF x(Shape{batch, is[1], is[2], is[3]});
    std::vector<int> labels;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t idx = rng.below(train.size());
      TensorF img(Shape{is[1], is[2], is[3]});
      std::copy_n(train.images.data() + idx * sample, sample, img.data());
      if (flips) {
        if (rng.coin()) img = flip_horizontal(img);
        if (rng.coin()) img = flip_vertical(img);
      }
      std::copy(img.values().begin(), img.values().end(), x.data() + b * sample);
      labels.push_back(train.labels[idx]);
    }
    ForwardContext<float> ctx{tape, true, slog};
    return ops::softmax_cross_entropy(net.forward(ctx, tape.constant(std::move(x))), labels);
  };
  task.evaluate = accuracy;
  task.on_best = [&](std::size_t it, double metric) {
    best = snapshot(state);
    log << "  iter " << it << ": test accuracy " << metric << " % (best)\n";
  };
  const RunLog run = train_loop(task, loop_config(cfg));
  if (!best.empty()) restore(state, best);
  const double acc = accuracy();
  run.write_csv(out / "train_log.csv");
  save_checkpoint(out / "checkpoint", cfg.manifest(), state);
  Csv csv({"model", "stages", "layers", "parameters", "best_iter", "test_accuracy_pct"});
  csv.row(model, std::to_string(mc.stages[0]) + "-" + std::to_string(mc.stages[1]) + "-" + std::to_string(mc.stages[2]),
          net.layer_count(), params, run.best_iter, acc);
  csv.write(out / "eval.csv");
  log << "best test accuracy " << acc << " % (iteration " << run.best_iter << "); " << clock.seconds() << " s\n";
  return kOk;
}

// ---- eval -----------------------------------------------------------------------------

std::vector<KeySpec> eval_keys() {
  return {
      {"checkpoint", "", "train-sr checkpoint directory (evaluates its synthetic test set)"},
      {"reference", "", "comma-separated reference PPM files"},
      {"candidate", "", "comma-separated candidate PPM files"},
      {"dump_images", "true", "write lr/sr/hr PPM files for checkpoint evaluation"},
      {"seed", "0", "unused; kept for manifest uniformity"},
  };
}

int cmd_eval(const Config& cfg, const std::filesystem::path& out, std::ostream& log) {
  SrEval e;
  if (!cfg.str("checkpoint").empty()) {
    const std::filesystem::path dir = cfg.str("checkpoint");
    Config train = default_config("train-sr");
    train.load_file((dir / "manifest.txt").string());
    SrNet<float> net(sr_model_config(train), train.u64("seed"));
    load_checkpoint(dir, net.state());
    const SrData data = sr_data(train);
    e = evaluate_sr(net, data.test, true);
    if (cfg.flag("dump_images")) {
      for (std::size_t i = 0; i < data.test.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%03zu", i);
        save_ppm(out / ("lr_" + std::string(name) + ".ppm"), data.test[i].lr);
        save_ppm(out / ("sr_" + std::string(name) + ".ppm"), e.outputs[i]);
        save_ppm(out / ("hr_" + std::string(name) + ".ppm"), data.test[i].hr);
      }
    }
  } else {
    const auto refs = cfg.strings("reference"), cands = cfg.strings("candidate");
    if (refs.empty() || refs.size() != cands.size())
      throw UsageError("set checkpoint, or reference and candidate lists of equal length");
    for (std::size_t i = 0; i < refs.size(); ++i) {
      const auto a = load_ppm(refs[i]), b = load_ppm(cands[i]);
      e.psnr.push_back(psnr_for_csv(psnr_rgb(b, a)));
      e.ssim.push_back(ssim_y(b, a));
    }
  }
  for (std::size_t i = 0; i < e.psnr.size(); ++i)
    log << "image " << i << ": PSNR " << e.psnr[i] << " dB, SSIM " << e.ssim[i] << "\n";
  log << "mean: PSNR " << e.mean_psnr() << " dB, SSIM " << e.mean_ssim() << "\n";
  write_sr_eval(e, out / "eval.csv");
  return kOk;
}

}  // namespace paon::cli
