#pragma once

// Paired distillation experiments on a labeled mixture. Every study is a pure
// function of (teacher, spec, configs, seeds): cells run on a worker pool and
// results are merged in (cell, seed) order.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cdm/distill/trainer.hpp"
#include "cdm/eval/error_order.hpp"
#include "cdm/eval/metrics.hpp"
#include "cdm/flow/velocity_model.hpp"
#include "cdm/oracle/mixture.hpp"

namespace cdm::eval {

struct EvalSettings {
  int samples = 4000;          // held-out data and model samples
  int energy_samples = 1000;   // subset used by the O(n^2) energy distance
  int projections = 200;
  int student_steps = 4;
  int teacher_steps = 128;
  double guided_alpha = flow::kTeacherGuidanceScale;
  int m2_trajectories = 256;
  int m2_steps = 32;
  double m2_probe = oracle::kDefaultProbeStep;
  std::uint64_t seed = 12345;  // data, noise and projection draws for evaluation
  int workers = 1;
};

// Everything students are compared against, computed once per study.
struct Reference {
  std::vector<int> classes;  // row i has class i mod C
  Mat data;                  // held-out draws from the spec
  Mat x_start;               // shared initial noise for every sampler
  Mat teacher_free;          // teacher, conditional branch, teacher_steps
  Mat teacher_guided;        // teacher, guided_alpha, teacher_steps
  double teacher_sw2 = 0.0;  // teacher_free against data
};

Reference make_reference(const flow::VelocityModel& teacher, const oracle::MixtureSpec& spec,
                         const EvalSettings& settings);

struct StudentMetrics {
  double sw2_data = 0.0;
  Estimate energy_data;
  Estimate energy_free;    // against the teacher's unguided samples
  Estimate energy_guided;  // against the teacher's guided samples
  M2Profile m2;
  long skipped = 0;
  std::uint64_t checksum = 0;
};

StudentMetrics evaluate_student(const flow::VelocityField& student, const Reference& ref,
                                const EvalSettings& settings);

struct Cell {
  std::string name;
  distill::DistillConfig config;
};

struct CellResult {
  std::string cell;
  std::uint64_t seed = 0;
  StudentMetrics metrics;
};

// Distills and evaluates every (cell, seed) pair. A cell whose switches are
// all off is evaluated on the teacher itself.
std::vector<CellResult> run_cells(const flow::VelocityModel& teacher, const Reference& ref,
                                  const std::vector<Cell>& cells, const std::vector<std::uint64_t>& seeds,
                                  const EvalSettings& settings);

// Calls job(i) for i in [0, n) on up to `workers` threads. The first
// exception (by index) is rethrown after all jobs finish.
void parallel_for(int n, int workers, const std::function<void(int)>& job);

struct EvalReport {
  std::string metric;
  double value = 0.0;
  double std_error = 0.0;
  long samples = 0;
  std::string seeds;
  std::string fingerprint;
};

std::string reports_csv(const std::vector<EvalReport>& reports);
// One row per (cell, seed) with every metric.
std::string cells_csv(const std::vector<CellResult>& results);

std::vector<double> collect(const std::vector<CellResult>& results, const std::string& cell,
                            double (*metric)(const StudentMetrics&));

struct StudyOutput {
  std::vector<CellResult> cells;
  std::vector<EvalReport> reports;
};

// Dynamic (one cell per n_max) against a fixed grid of `fixed_steps`, paired
// by seed. Divergence is SW2 to held-out data.
StudyOutput schedule_study(const flow::VelocityModel& teacher, const Reference& ref,
                           const distill::DistillConfig& base, const std::vector<int>& n_max_values,
                           const std::vector<std::uint64_t>& seeds, const EvalSettings& settings,
                           const std::string& fingerprint);

// DM-only students: energy distance to the unguided and to the guided
// teacher, and their ratio.
StudyOutput cfg_free_study(const flow::VelocityModel& teacher, const Reference& ref,
                           const distill::DistillConfig& base, const std::vector<std::uint64_t>& seeds,
                           const EvalSettings& settings, const std::string& fingerprint);

// Median sup |dv/dtau| for CA+DM+CDM against CA+DM.
StudyOutput m2_study(const flow::VelocityModel& teacher, const Reference& ref, const distill::DistillConfig& base,
                     const std::vector<std::uint64_t>& seeds, const EvalSettings& settings,
                     const std::string& fingerprint);

// Cell names: full, no_ca, no_dm, no_cdm, ca_only, dm_only, cdm_only,
// all_off, fixed_schedule, gaussian_perturb, on_traj, full_traj_target.
std::vector<Cell> ablation_cells(const distill::DistillConfig& base);
StudyOutput ablation_grid(const flow::VelocityModel& teacher, const Reference& ref,
                          const std::vector<Cell>& cells, const std::vector<std::uint64_t>& seeds,
                          const EvalSettings& settings, const std::string& fingerprint);

std::string seeds_label(const std::vector<std::uint64_t>& seeds);

}  // namespace cdm::eval
