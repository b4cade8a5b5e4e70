#pragma once

// Run configuration and subcommand dispatch for the `mvnsdde` tool.
//
// Config files are flat `key = value` text; `#` starts a comment and lists
// are comma-separated. Command-line overrides win over file values. The
// effective configuration, defaults included, is echoed to
// `<outdir>/config.echo` in the same format so it can be fed back in.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mvnsdde/model.hpp"

namespace mvnsdde::cli {

enum ExitStatus : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitInvalid = 2,
  kExitOverflow = 3,
};

using KeyValues = std::vector<std::pair<std::string, std::string>>;

struct RunConfig {
  std::string command;
  std::string model = "example51";
  ModelParameters model_params;
  SchemeParams scheme;
  bool seed_set = false;
  double error_exponent_q = 2.0;
  int monitor_p = 4;
  double delta_ref = 0x1p-16;
  std::vector<double> deltas = {0x1p-15, 0x1p-14, 0x1p-13, 0x1p-12, 0x1p-11};
  std::vector<std::size_t> xis = {16, 64, 256, 1024};
  std::size_t mc_reps = 200;
  std::size_t dim = 1;
  std::size_t replicates = 1;
  std::string outdir;
  std::string name;
  int workers = 1;
  bool gnuplot = true;
  bool dump_noise = false;

  RunConfig();
};

const std::vector<std::string>& subcommands();
const std::vector<std::string>& config_keys();

/// Parses `key = value` lines. Throws ConfigError on a line without '='.
KeyValues parse_key_values(std::string_view text);

/// Applies file entries, then overrides, on top of the defaults.
/// Throws ConfigError on unknown keys, unparsable values or a missing seed.
RunConfig build_run_config(const std::string& command, const KeyValues& file_entries,
                           const KeyValues& overrides);

RunConfig load_run_config(const std::string& command, const std::optional<std::filesystem::path>& file,
                          const KeyValues& overrides);

/// Every key with its effective value, in config-file syntax.
std::string echo_config(const RunConfig& config);

ModelSpec model_from_config(const RunConfig& config);
SchemeParams scheme_from_config(const RunConfig& config);

/// Runs the configured subcommand and writes its outputs under config.outdir.
int dispatch(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Full command line: `mvnsdde <subcommand> [--config FILE] [--KEY VALUE ...]`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mvnsdde::cli
