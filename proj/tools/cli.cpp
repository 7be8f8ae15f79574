#include <CLI11.hpp>

#include <iomanip>
#include <ostream>

#include "commands.hpp"
#include "paon/data.hpp"
#include "paon/training.hpp"

namespace paon::cli {

const std::vector<Command>& commands() {
  static const std::vector<Command> all{
      {"approx", "teacher-student fit of scalar Padé neurons against a quadratic baseline", approx_keys(), cmd_approx},
      {"gradcheck", "finite-difference gradient suite for Padé layers", gradcheck_keys(), cmd_gradcheck},
      {"count", "multiply-accumulate counts of single layers", count_keys(), cmd_count},
      {"singularity", "denominator bound and per-iteration small-denominator log", singularity_keys(), cmd_singularity},
      {"train-sr", "train a super-resolution network on synthetic textures", train_sr_keys(), cmd_train_sr},
      {"train-cls", "train an image classifier", train_cls_keys(), cmd_train_cls},
      {"eval", "PSNR / SSIM of a trained SR checkpoint or of image pairs", eval_keys(), cmd_eval},
      {"reduce-check", "Padé layers of degree [1/0] and [2/0] against their classic forms", reduce_check_keys(), cmd_reduce_check},
  };
  return all;
}

const Command& find_command(const std::string& name) {
  for (const auto& c : commands())
    if (c.name == name) return c;
  throw UsageError("unknown command '" + name + "'");
}

Config default_config(const std::string& command) {
  const auto& c = find_command(command);
  return Config(c.name, c.keys);
}

int execute(const Config& cfg, const std::filesystem::path& out, std::ostream& log) {
  std::filesystem::create_directories(out);
  write_file(out / "manifest.txt", cfg.manifest());
  return find_command(cfg.command()).run(cfg, out, log);
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Padé neuron layer kit: reproduction and property suites"};
  app.require_subcommand(1);
  struct Args {
    std::string config;
    std::vector<std::string> sets;
    std::string out;
    bool list_keys = false;
  };
  std::vector<Args> args(commands().size());
  std::vector<CLI::App*> subs;
  for (std::size_t i = 0; i < commands().size(); ++i) {
    const auto& c = commands()[i];
    auto* sub = app.add_subcommand(c.name, c.summary);
    sub->add_option("-c,--config", args[i].config, "key=value config file (a manifest.txt works too)");
    sub->add_option("-s,--set", args[i].sets, "override one key: --set key=value (repeatable)");
    sub->add_option("-o,--out", args[i].out, "output directory (default: runs/<command>)");
    sub->add_flag("--list-keys", args[i].list_keys, "print the configuration keys and exit");
    subs.push_back(sub);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, er;
    const int code = app.exit(e, o, er);
    out << o.str();
    err << er.str();
    return code == 0 ? kOk : kUsage;
  }
  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    const auto& a = args[i];
    try {
      Config cfg = default_config(commands()[i].name);
      if (a.list_keys) {
        for (const auto& k : cfg.keys())
          out << std::left << std::setw(22) << k.name << std::setw(18) << k.default_value << " " << k.help << "\n";
        return kOk;
      }
      if (!a.config.empty()) cfg.load_file(a.config);
      for (const auto& s : a.sets) cfg.assign(s);
      const std::filesystem::path dir = a.out.empty() ? std::filesystem::path("runs") / cfg.command() : std::filesystem::path(a.out);
      const int code = execute(cfg, dir, out);
      out << (code == kOk ? "status: ok" : "status: FAILED") << "\n";
      return code;
    } catch (const UsageError& e) {
      err << "error: " << e.what() << "\n";
      return kUsage;
    } catch (const TrainingDiverged& e) {
      err << "error: " << e.what() << "\n";
      return kRuntime;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << "\n";
      return kRuntime;
    }
  }
  return kUsage;
}

}  // namespace paon::cli
