#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "cli/config.hpp"
#include "cli/verify.hpp"

namespace cdm::cli {

// Artifacts a command wrote, relative to its output directory.
struct CommandOutput {
  std::filesystem::path directory;
  std::vector<std::string> artifacts;
};

// Every command writes through write-then-rename, records resolved.cfg and
// VERSION next to its artifacts and refreshes manifest.csv there.
CommandOutput train_teacher_command(const RunConfig& config, std::ostream& log);
CommandOutput distill_command(const RunConfig& config, std::ostream& log);
CommandOutput eval_command(const RunConfig& config, std::ostream& log);

struct SampleOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path output;  // directory
  int n = 1000;
  int steps = 4;
  std::uint64_t seed = 0;
  double alpha = 1.0;
};
CommandOutput sample_command(const SampleOptions& options, std::ostream& log);

// Names accepted by study_command.
const std::vector<std::string>& study_names();
CommandOutput study_command(const std::string& name, const RunConfig& config, std::ostream& log);

struct VerifyRun {
  std::vector<CheckResult> results;
  bool passed = false;
};
// Writes verify.csv into `output` when it is non-empty.
VerifyRun verify_command(const VerifyOptions& options, const VerifyHooks& hooks, const std::filesystem::path& output,
                         std::ostream& log);

// Hex fingerprint of the resolved config and the spec file it names.
std::string config_fingerprint(const RunConfig& config);

// Text for --help-formats.
std::string formats_help();

}  // namespace cdm::cli
