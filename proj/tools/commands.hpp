#pragma once

// Subcommands of the paon executable. Every command reads a resolved Config,
// writes its CSV artifacts and manifest.txt into the output directory and
// returns an exit status: 0 when every check passes, 1 when one fails.

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "config.hpp"

namespace paon::cli {

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kUsage = 2, kRuntime = 3 };

struct Command {
  std::string name;
  std::string summary;
  std::vector<KeySpec> keys;
  std::function<int(const Config&, const std::filesystem::path& out, std::ostream& log)> run;
};

const std::vector<Command>& commands();
/// Throws UsageError for unknown names.
const Command& find_command(const std::string& name);
Config default_config(const std::string& command);

/// Writes the manifest, then runs the command.
int execute(const Config& cfg, const std::filesystem::path& out, std::ostream& log);

/// Full command-line entry point (argv[0] is the program name).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Individual commands.
int cmd_approx(const Config& cfg, const std::filesystem::path& out, std::ostream& log);
int cmd_gradcheck(const Config& cfg, const std::filesystem::path& out, std::ostream& log);
int cmd_count(const Config& cfg, const std::filesystem::path& out, std::ostream& log);
int cmd_reduce_check(const Config& cfg, const std::filesystem::path& out, std::ostream& log);
int cmd_singularity(const Config& cfg, const std::filesystem::path& out, std::ostream& log);
int cmd_train_sr(const Config& cfg, const std::filesystem::path& out, std::ostream& log);
int cmd_train_cls(const Config& cfg, const std::filesystem::path& out, std::ostream& log);
int cmd_eval(const Config& cfg, const std::filesystem::path& out, std::ostream& log);

std::vector<KeySpec> approx_keys();
std::vector<KeySpec> gradcheck_keys();
std::vector<KeySpec> count_keys();
std::vector<KeySpec> reduce_check_keys();
std::vector<KeySpec> singularity_keys();
std::vector<KeySpec> train_sr_keys();
std::vector<KeySpec> train_cls_keys();
std::vector<KeySpec> eval_keys();

}  // namespace paon::cli
