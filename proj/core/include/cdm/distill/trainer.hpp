#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cdm/ad/adamw.hpp"
#include "cdm/distill/losses.hpp"
#include "cdm/flow/schedule.hpp"
#include "cdm/flow/velocity_model.hpp"

namespace cdm::distill {

struct DistillConfig {
  double alpha = flow::kTeacherGuidanceScale;
  int n_max = 28;
  int ttur = 2;  // fake-teacher updates per student update
  double student_lr = 1e-5;
  double fake_lr = 5e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 1e-3;
  bool use_ca = true;
  bool use_dm = true;
  bool use_cdm = true;
  flow::ScheduleMode schedule = flow::ScheduleMode::dynamic;
  int fixed_steps = 4;
  int batch = 64;
  long iterations = 4000;
  std::uint64_t seed = 0;
  CdmOptions cdm;
  WeightClamp clamp;
  double time_floor = flow::kDefaultTimeFloor;

  // Throws ContractError on out-of-range values.
  void validate() const;
};

struct FakeDraw {
  Mat tau;
  Mat eps;
};

// Every random quantity one iteration consumes, drawn in this order:
// conditions, schedule, x_{t_1}, anchor, k fake-teacher (tau, eps) pairs,
// CA (tau, eps), DM (tau, eps), t', CDM (tau, eps), Gaussian-perturbation eps.
// All are drawn whatever the loss switches, so ablations share randomness.
struct IterationDraws {
  std::vector<int> classes;
  flow::Schedule schedule{{1.0}};
  Mat x_start;
  int anchor = 0;  // 0-based index into the schedule
  std::vector<FakeDraw> fake;
  Mat tau_ca, eps_ca;
  Mat tau_dm, eps_dm;
  Mat t_prime;
  Mat tau_cdm, eps_cdm;
  Mat eps_perturb;
};

IterationDraws draw_iteration(const DistillConfig& config, int dim, int num_classes, Rng& rng);

struct LossTerms {
  double ca = 0.0;
  double dm = 0.0;
  double cdm = 0.0;
  double total = 0.0;
  double fake_loss = 0.0;  // mean over the k fake-teacher updates
  double w_ca = 0.0;       // batch means of the weighting factors
  double w_dm = 0.0;
  double w_cdm = 0.0;
  int w_clamped = 0;
  int n_steps = 0;
  int anchor = 0;
  double t_anchor = 1.0;
  double stride = 0.0;  // mean |t' - t_i|
  bool skipped = false;
  std::string skip_reason;
  // Per-row times for the statistical checks.
  Mat tau_ca, tau_dm, t_prime, tau_cdm;
};

struct Simulation {
  Mat x_anchor;
  double t_anchor = 1.0;
  Mat final_sample;  // only filled when requested
};

// Runs the student's conditional Euler sampler without recording gradients
// and returns the state at the anchor time.
Simulation backward_simulate(const flow::VelocityField& student, const flow::Schedule& schedule, const Mat& x_start,
                             std::span<const int> c, int anchor, bool want_final);

// One AdamW step of the fake teacher on the flow-matching loss of
// sg[x_hat0]. Returns the loss before the step.
double update_fake_teacher(flow::VelocityModel& fake, ad::AdamW& opt, const Mat& x_hat0, const FakeDraw& draw,
                           std::span<const int> c);

// The student, the frozen real teacher and the online fake teacher with their
// optimizers. Student and fake start as copies of the teacher.
class Distiller {
 public:
  Distiller(const flow::VelocityModel& teacher, DistillConfig config);

  // One pass of the training procedure. Non-finite losses or simulations
  // skip the student update and are reported in the result.
  LossTerms train_step();
  // Same, with externally supplied draws.
  LossTerms train_step(const IterationDraws& draws);

  const flow::VelocityModel& student() const { return student_; }
  const flow::VelocityModel& teacher() const { return teacher_; }
  const flow::VelocityModel& fake() const { return fake_; }
  const DistillConfig& config() const { return config_; }
  long iteration() const { return iteration_; }
  long skipped() const { return skipped_; }
  long fake_updates() const { return fake_opt_.steps(); }
  long student_updates() const { return student_opt_.steps(); }
  Rng& rng() { return rng_; }

 private:
  DistillConfig config_;
  flow::VelocityModel teacher_;
  flow::VelocityModel student_;
  flow::VelocityModel fake_;
  ad::AdamW student_opt_;
  ad::AdamW fake_opt_;
  Rng rng_;
  long iteration_ = 0;
  long skipped_ = 0;
};

struct DistillResult {
  flow::VelocityModel student;
  flow::VelocityModel fake;
  std::vector<LossTerms> history;
  long skipped = 0;
};

// Runs `config.iterations` training steps. `on_step` sees each iteration's
// terms and the distiller after the update.
DistillResult distill(const flow::VelocityModel& teacher, const DistillConfig& config,
                      const std::function<void(long, const LossTerms&, const Distiller&)>& on_step = {});

// CSV with one row per iteration. wall_time holds the supplied per-row
// seconds, or 0 when `wall_times` is empty.
std::string metrics_csv(const std::vector<LossTerms>& history, const std::vector<double>& wall_times = {});
inline constexpr const char* kMetricsHeader =
    "iteration,ca,dm,cdm,total,fake_loss,w_ca,w_dm,w_cdm,w_clamped,n_steps,anchor,t_anchor,stride,skipped,wall_time";

}  // namespace cdm::distill
