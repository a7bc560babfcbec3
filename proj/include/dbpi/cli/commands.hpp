#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string_view>

#include "dbpi/cli/config.hpp"

namespace dbpi::cli {

enum ExitCode : int {
  exit_ok = 0,          // pass / converged
  exit_reported = 1,    // not converged, diverged, or a reported failure status
  exit_validation = 2,  // a validation check failed
  exit_parse = 3,       // unreadable or schema-invalid config
};

struct CommandOptions {
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;  // applied to the config before parsing
  unsigned threads = 1;               // sweep only
};

struct CommandResult {
  int exit_code = exit_ok;
  Json report;
};

/// --out, then $DBPI_OUT, then outputs.dir, then the working directory.
std::filesystem::path output_dir(const CommandOptions& opts, const ExperimentConfig& cfg);

CommandResult cmd_validate(const ExperimentConfig& cfg, const CommandOptions& opts, std::ostream& log);
CommandResult cmd_spectrum(const ExperimentConfig& cfg, const CommandOptions& opts, std::ostream& log);
CommandResult cmd_run(const ExperimentConfig& cfg, const CommandOptions& opts, std::ostream& log);
CommandResult cmd_rate(const ExperimentConfig& cfg, const CommandOptions& opts, std::ostream& log);
CommandResult cmd_sweep(const ExperimentConfig& cfg, const CommandOptions& opts, std::ostream& log);

/// Loads the config, dispatches, and maps errors to exit codes.
int run_command(std::string_view command, const std::filesystem::path& config_path, const CommandOptions& opts,
                std::ostream& out, std::ostream& err);

}  // namespace dbpi::cli
