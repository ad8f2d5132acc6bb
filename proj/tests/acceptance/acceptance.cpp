// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 only if
// every criterion passes. Criteria 7-10 train on the eight-Gaussian ring
// with configs/ring.cfg and take several minutes on one core.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cdm/eval/study.hpp"
#include "cdm/flow/checkpoint.hpp"
#include "cdm/io/atomic_file.hpp"
#include "cdm/io/keyvalue.hpp"
#include "cdm/oracle/spec_io.hpp"
#include "cli/commands.hpp"
#include "cli/config.hpp"
#include "cli/verify.hpp"
#include "support/random_program.hpp"

namespace fs = std::filesystem;
using namespace cdm;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = secs < budget_s;
  const bool ok = o.passed && in_time;
  failures += ok ? 0 : 1;
  std::printf("%s [%d] %s: %s; %.1f s (budget %.0f s)%s\n", ok ? "PASS" : "FAIL", id, title.c_str(), o.detail.c_str(),
              secs, budget_s, in_time ? "" : " over budget");
  std::fflush(stdout);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : " ") + fmt(x);
  return "[" + s + "]";
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[e.path().lexically_relative(root).generic_string()] = io::read_file(e.path());
  return out;
}

fs::path work_dir() { return fs::path(CDM_TEST_WORK_DIR) / "acceptance"; }

}  // namespace

int main() {
  const fs::path source(CDM_SOURCE_DIR);
  fs::create_directories(work_dir());

  report(1, "Tweedie exactness", 10, [] {
    cli::VerifyOptions o;
    o.tweedie_cases = 1000;
    const auto r = cli::check_tweedie(o);
    return Outcome{r.passed && r.measured <= 1e-10,
                   "max relative error " + fmt(r.measured) + " over 1000 mixtures (tolerance 1e-10)"};
  });

  report(2, "Gradient identities", 60, [] {
    cli::VerifyOptions o;
    o.gradient_batch = 4096;
    const auto ca = cli::check_ca_gradient(o);
    const auto dm = cli::check_dm_gradient(o);
    return Outcome{ca.measured > 0.99 && dm.measured > 0.99,
                   "cosine CA " + fmt(ca.measured) + ", DM " + fmt(dm.measured) + " at batch 4096 (need > 0.99)"};
  });

  report(3, "Autodiff finite differences", 30, [] {
    Rng rng(7);
    double worst = 0.0, worst_abs = 0.0;
    int bad = 0;
    for (int i = 0; i < 100; ++i) {
      const auto program = testing::make_random_program(rng);
      const auto r = testing::check_gradients(program, 1e-5, 1e-4, 1e-8);
      worst = std::max(worst, r.max_rel_error);
      worst_abs = std::max(worst_abs, r.max_abs_error);
      bad += r.passed ? 0 : 1;
    }
    return Outcome{bad == 0, "100 random programs, max relative error above the floor " + fmt(worst) +
                                 ", max absolute error " + fmt(worst_abs) + " (tolerance 1e-4, absolute floor 1e-8)"};
  });

  report(4, "Euler orders", 60, [] {
    cli::VerifyOptions o;
    const auto local = cli::check_euler_local_order(o);
    const auto global = cli::check_euler_global_order(o);
    return Outcome{local.measured <= 0.1 && global.measured <= 0.15, local.detail + "; " + global.detail};
  });

  report(5, "Fixed points", 10, [] {
    const auto checks = cli::check_fixed_points({});
    bool ok = !checks.empty();
    std::string d;
    for (const auto& c : checks) {
      ok = ok && c.measured == 0.0;
      d += (d.empty() ? "" : ", ") + c.name + " max|grad| " + fmt(c.measured);
    }
    return Outcome{ok, d};
  });

  report(6, "Zero-stride reduction", 10, [] {
    const auto r = cli::check_zero_stride({});
    return Outcome{r.passed, "cdm_loss vs dm_loss: " + r.detail};
  });

  // Criteria 7-10 share one teacher trained from configs/ring.cfg.
  const fs::path ring_root = work_dir() / "ring";
  fs::remove_all(ring_root);
  cli::RunConfig ring;
  std::ofstream log(work_dir() / "ring.log");
  double reference_sw2 = 0.0;

  report(7, "End-to-end distillation", 15 * 60, [&] {
    ring = cli::load_run_config((source / "configs/ring.cfg").string(), {{"run.log_every", "0"}}, ring_root);
    const auto fixture = io::load_keyvalue((source / "tests/fixtures/ring_reference.cfg").string());
    for (const auto& s : fixture.sections)
      if (const auto* e = s.find("teacher_sw2")) reference_sw2 = io::parse_double(fixture, *e);
    if (!(reference_sw2 > 0.0)) return Outcome{false, "fixture lacks teacher_sw2"};

    cli::train_teacher_command(ring, log);
    cli::distill_command(ring, log);
    cli::eval_command(ring, log);
    std::map<std::string, double> metrics;
    std::istringstream csv(io::read_file(ring.output / "eval.csv"));
    std::string line;
    std::getline(csv, line);
    while (std::getline(csv, line)) {
      const auto comma = line.find(',');
      metrics[line.substr(0, comma)] = std::stod(line.substr(comma + 1, line.find(',', comma + 1) - comma - 1));
    }
    const double student = metrics.at("student_sw2_data");
    return Outcome{student <= 2.0 * reference_sw2,
                   "4-step student SW2 " + fmt(student) + " vs 2 x reference teacher " + fmt(reference_sw2) +
                       " (this run's 128-step teacher: " + fmt(metrics.at("teacher_sw2_data")) + ")"};
  });

  // Criteria 8-10 report FAIL rather than abort if the shared teacher is missing.
  std::optional<flow::VelocityModel> teacher;
  std::optional<eval::Reference> ref;
  std::string fp;
  try {
    const auto spec = oracle::load_mixture_spec(ring.spec.string());
    teacher = flow::load_checkpoint(cli::teacher_path(ring));
    ref = eval::make_reference(*teacher, spec, ring.eval);
    fp = cli::config_fingerprint(ring);
  } catch (const std::exception& e) {
    std::printf("note: ring teacher unavailable: %s\n", e.what());
  }
  auto need_teacher = [&] {
    if (!teacher) throw std::runtime_error("ring teacher unavailable");
  };
  const std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};

  report(8, "M2 regularization", 30 * 60, [&] {
    need_teacher();
    const auto out = eval::m2_study(*teacher, *ref, ring.distill, seeds, ring.eval, fp);
    const auto m2 = [](const eval::StudentMetrics& m) { return m.m2.sup; };
    const auto with = eval::collect(out.cells, "ca_dm_cdm", m2);
    const auto without = eval::collect(out.cells, "ca_dm", m2);
    const double a = eval::median(with), b = eval::median(without);
    return Outcome{a <= b, "median sup|dv/dtau| CA+DM+CDM " + fmt(a) + " " + join(with) + " vs CA+DM " + fmt(b) +
                               " " + join(without)};
  });

  report(9, "CFG-free alignment", 30 * 60, [&] {
    need_teacher();
    const auto out = eval::cfg_free_study(*teacher, *ref, ring.distill, seeds, ring.eval, fp);
    int closer = 0;
    std::string d;
    for (const auto& r : out.cells) {
      closer += r.metrics.energy_free.value < r.metrics.energy_guided.value ? 1 : 0;
      d += " " + fmt(r.metrics.energy_free.value) + "/" + fmt(r.metrics.energy_guided.value);
    }
    return Outcome{closer >= 4, "DM-only closer to unguided teacher in " + std::to_string(closer) +
                                    " of 5 seeds (energy free/guided:" + d + ")"};
  });

  report(10, "Schedule decoupling", 30 * 60, [&] {
    need_teacher();
    const auto out = eval::schedule_study(*teacher, *ref, ring.distill, {ring.distill.n_max}, seeds, ring.eval, fp);
    const auto sw2 = [](const eval::StudentMetrics& m) { return m.sw2_data; };
    const auto fixed = eval::collect(out.cells, "fixed", sw2);
    const auto dynamic = eval::collect(out.cells, "dynamic_nmax" + std::to_string(ring.distill.n_max), sw2);
    const double f = eval::median(fixed), d = eval::median(dynamic);
    return Outcome{d <= f, "median SW2 dynamic " + fmt(d) + " " + join(dynamic) + " vs fixed " + fmt(f) + " " +
                               join(fixed)};
  });

  report(11, "Determinism", 10 * 60, [&] {
    const fs::path root = work_dir() / "determinism";
    fs::remove_all(root);
    const std::string tool = CDM_TOOL_PATH;
    const std::string cfg = (source / "configs/smoke.cfg").string();
    const std::string env = "CDM_OUTPUT_ROOT='" + root.string() + "' ";
    const std::vector<std::string> commands = {
        "train-teacher '" + cfg + "'",
        "distill '" + cfg + "'",
        "eval '" + cfg + "'",
        "sample --checkpoint '" + (root / "runs/smoke/student.ckpt").string() + "' --n 500 --seed 3 --out '" +
            (root / "samples").string() + "'",
        "study m2 '" + cfg + "'",
        "study schedule '" + cfg + "'",
    };
    auto run_all = [&] {
      for (const auto& c : commands)
        if (std::system((env + "'" + tool + "' " + c + " > /dev/null 2>&1").c_str()) != 0)
          throw std::runtime_error("command failed: cdmlab " + c);
      return snapshot(root);
    };
    const auto first = run_all();
    const auto second = run_all();
    std::size_t differ = 0;
    std::string names;
    for (const auto& [name, bytes] : first) {
      const auto it = second.find(name);
      if (it == second.end() || it->second != bytes) {
        ++differ;
        names += " " + name;
      }
    }
    const std::size_t ckpts = static_cast<std::size_t>(
        std::count_if(first.begin(), first.end(), [](const auto& kv) { return kv.first.ends_with(".ckpt"); }));
    const std::size_t csvs = static_cast<std::size_t>(
        std::count_if(first.begin(), first.end(), [](const auto& kv) { return kv.first.ends_with(".csv"); }));
    return Outcome{differ == 0 && first.size() == second.size() && ckpts >= 3,
                   std::to_string(first.size()) + " files (" + std::to_string(ckpts) + " checkpoints, " +
                       std::to_string(csvs) + " CSVs) from 6 commands re-run; " + std::to_string(differ) + " differ" +
                       names};
  });

  std::printf("%s: %d of 11 criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
