#pragma once

// Run configuration for the command-line tool. Files use the sectioned
// key-value format from cdm/io/keyvalue.hpp; every key has a fixed section,
// type and range, and anything else is rejected with its line number.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cdm/distill/trainer.hpp"
#include "cdm/eval/study.hpp"
#include "cdm/flow/teacher.hpp"
#include "cdm/flow/velocity_model.hpp"

namespace cdm::cli {

inline constexpr const char* kOutputRootEnv = "CDM_OUTPUT_ROOT";

struct RunConfig {
  std::filesystem::path source;  // config file, empty for defaults

  // [run]
  std::filesystem::path output = "runs/default";
  std::filesystem::path teacher_checkpoint = "teacher.ckpt";  // relative to output
  std::filesystem::path student_checkpoint = "student.ckpt";  // relative to output
  double time_floor = flow::kDefaultTimeFloor;
  long log_every = 500;  // 0 disables progress lines

  // [data]
  std::filesystem::path spec;  // relative to the config file

  flow::ModelConfig model;          // [model]; dim and classes come from the spec
  flow::TeacherConfig teacher;      // [teacher]
  distill::DistillConfig distill;   // [distill]
  eval::EvalSettings eval;          // [eval]

  // [study]
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::vector<int> n_max_values{28};
};

// "section.key" = value pairs applied after the file is read.
using Overrides = std::vector<std::pair<std::string, std::string>>;

// Parses config text. Relative [data] spec paths resolve against the
// directory of `path`; a relative [run] output resolves against `output_root`
// when it is non-empty and against the working directory otherwise.
RunConfig parse_run_config(const std::string& text, const std::string& path, const Overrides& overrides = {},
                           const std::filesystem::path& output_root = {});
RunConfig load_run_config(const std::string& path, const Overrides& overrides = {},
                          const std::filesystem::path& output_root = {});

// The output root from CDM_OUTPUT_ROOT, or empty.
std::filesystem::path output_root_from_env();

// Canonical text listing every key. Parsing it yields the same config.
std::string format_run_config(const RunConfig& config);

// Every accepted key as "section.key", with its type and range, for help.
std::vector<std::string> config_keys();

// Paths derived from the output directory.
std::filesystem::path teacher_path(const RunConfig& config);
std::filesystem::path student_path(const RunConfig& config);

}  // namespace cdm::cli
