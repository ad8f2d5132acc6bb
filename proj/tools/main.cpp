#include <CLI11.hpp>

#include <exception>
#include <iostream>
#include <string>

#include "cdm/error.hpp"
#include "cdm/version.hpp"
#include "cli/commands.hpp"

namespace {

using namespace cdm;

// Leftover "--section.key=value" arguments become config overrides.
cli::Overrides overrides_from(const std::vector<std::string>& extras) {
  cli::Overrides out;
  for (const auto& arg : extras) {
    const auto eq = arg.find('=');
    if (arg.rfind("--", 0) != 0 || eq == std::string::npos || arg.find('.') > eq)
      throw CLI::ValidationError("unrecognized argument '" + arg + "' (overrides take the form --section.key=value)");
    out.emplace_back(arg.substr(2, eq - 2), arg.substr(eq + 1));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-step distillation of flow-matching models on labeled Gaussian mixtures"};
  app.require_subcommand(0, 1);
  bool formats = false;
  app.add_flag("--help-formats", formats, "Describe config keys, CSV columns and file formats");
  app.set_version_flag("--version", std::string("cdmlab ") + version());

  std::string config_path;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("config", config_path, "Run configuration file")->required();
    sub->allow_extras();
  };

  auto* teacher = app.add_subcommand("train-teacher", "Train the conditional flow-matching teacher");
  add_config(teacher);

  auto* distill = app.add_subcommand("distill", "Distill a few-step student from the teacher checkpoint");
  add_config(distill);
  bool no_ca = false, no_dm = false, no_cdm = false;
  distill->add_flag("--no-ca", no_ca, "Disable the guidance-augmentation loss");
  distill->add_flag("--no-dm", no_dm, "Disable the distribution-matching loss");
  distill->add_flag("--no-cdm", no_cdm, "Disable the off-trajectory matching loss");

  auto* sample = app.add_subcommand("sample", "Draw samples from a checkpoint");
  cli::SampleOptions sample_opts;
  std::string sample_out;
  sample->add_option("--checkpoint", sample_opts.checkpoint, "Model checkpoint")->required();
  sample->add_option("--n", sample_opts.n, "Number of samples")->check(CLI::PositiveNumber)->capture_default_str();
  sample->add_option("--steps", sample_opts.steps, "Euler steps (NFE)")->check(CLI::PositiveNumber)->capture_default_str();
  sample->add_option("--seed", sample_opts.seed, "Noise seed")->capture_default_str();
  sample->add_option("--alpha", sample_opts.alpha, "Guidance scale; 1 is the plain conditional branch")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  sample->add_option("--out", sample_out, "Output directory (default: samples under $CDM_OUTPUT_ROOT or .)");

  auto* evaluate = app.add_subcommand("eval", "Evaluate the student against held-out data and the teacher");
  add_config(evaluate);

  auto* verify = app.add_subcommand("verify", "Run the oracle invariant suite");
  std::string verify_out;
  cli::VerifyOptions verify_opts;
  verify->add_option("--out", verify_out, "Directory for verify.csv and plots");
  verify->add_option("--seed", verify_opts.seed, "Seed for the random cases")->capture_default_str();

  auto* study = app.add_subcommand("study", "Run a paired multi-seed study");
  std::string study_name;
  study->add_option("name", study_name, "schedule, cfg-free, m2 or ablation")
      ->required()
      ->check(CLI::IsMember(cli::study_names()));
  add_config(study);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (formats) {
      std::cout << cli::formats_help();
      return 0;
    }
    const auto root = cli::output_root_from_env();
    auto load = [&](CLI::App* sub, cli::Overrides extra = {}) {
      cli::Overrides ov = overrides_from(sub->remaining());
      ov.insert(ov.end(), extra.begin(), extra.end());
      return cli::load_run_config(config_path, ov, root);
    };

    if (teacher->parsed()) {
      cli::train_teacher_command(load(teacher), std::cerr);
    } else if (distill->parsed()) {
      cli::Overrides switches;
      if (no_ca) switches.emplace_back("distill.ca", "false");
      if (no_dm) switches.emplace_back("distill.dm", "false");
      if (no_cdm) switches.emplace_back("distill.cdm", "false");
      cli::distill_command(load(distill, switches), std::cerr);
    } else if (sample->parsed()) {
      sample_opts.output = !sample_out.empty() ? std::filesystem::path(sample_out)
                           : root.empty()      ? std::filesystem::path("samples")
                                               : root / "samples";
      cli::sample_command(sample_opts, std::cerr);
    } else if (evaluate->parsed()) {
      cli::eval_command(load(evaluate), std::cerr);
    } else if (verify->parsed()) {
      const auto run = cli::verify_command(verify_opts, {}, verify_out, std::cout);
      return run.passed ? 0 : 1;
    } else if (study->parsed()) {
      cli::study_command(study_name, load(study), std::cerr);
    } else {
      std::cout << app.help();
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "cdmlab: error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "cdmlab: error: " << e.what() << "\n";
    return 2;
  } catch (const ContractError& e) {
    std::cerr << "cdmlab: error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "cdmlab: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
