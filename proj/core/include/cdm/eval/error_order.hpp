#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cdm/flow/field.hpp"
#include "cdm/flow/schedule.hpp"
#include "cdm/matrix.hpp"
#include "cdm/oracle/gaussian_flow.hpp"
#include "cdm/rng.hpp"

namespace cdm::eval {

// Maps states at time `from` to time `to` along the exact flow.
using Transport = std::function<Mat(const Mat& z, double from, double to)>;

struct ErrorOrderConfig {
  std::vector<int> step_counts{4, 8, 16, 32, 64, 128};
  double t_start = 1.0;
  double t_end = 0.05;
  int reference_steps = 4096;  // used only when no exact transport is given
  double exact_threshold = 1e-12;
};

struct ErrorOrderResult {
  std::vector<double> step_sizes;
  std::vector<double> local_errors;   // max over steps and rows of the one-step error from an exact state
  std::vector<double> global_errors;  // max over rows of the error at t_end
  double local_slope = 0.0;
  double global_slope = 0.0;
  bool exact = false;  // every error below exact_threshold; slopes are then meaningless
};

// Euler on a uniform grid from t_start to t_end for each step count.
// Reference states come from `exact` when provided, otherwise from a
// `reference_steps` Euler run on the same field.
ErrorOrderResult euler_error_order(const flow::VelocityField& field, const Mat& x_start, std::span<const int> c,
                                   const ErrorOrderConfig& config = {}, const Transport& exact = {});

// Convenience wrapper for the analytic single-Gaussian flow.
ErrorOrderResult euler_error_order(const oracle::GaussianFlow& flow, const Mat& x_start,
                                   const ErrorOrderConfig& config = {});

// Velocity field backed by an analytic Gaussian flow.
class GaussianFlowField final : public flow::VelocityField {
 public:
  explicit GaussianFlowField(oracle::GaussianFlow flow) : flow_(std::move(flow)) {}
  int dim() const override { return flow_.dim(); }
  int null_condition() const override { return 0; }
  using VelocityField::velocity;
  ad::Tensor velocity(const ad::Tensor& x, const Mat& t, std::span<const int> c) const override;
  const oracle::GaussianFlow& flow() const { return flow_; }

 private:
  oracle::GaussianFlow flow_;
};

struct M2Profile {
  double sup = 0.0;
  double mean = 0.0;
  double q50 = 0.0;
  double q90 = 0.0;
  double q99 = 0.0;
  std::vector<double> times;     // probe times along the trajectory
  std::vector<double> time_sup;  // per-time max norm
  long probes = 0;
};

// Samples trajectories of the field's conditional branch along `schedule`
// from N(0, I) and applies the finite-difference material derivative at
// every visited state whose probe stays above the floor.
M2Profile m2_profile(const flow::VelocityField& field, const flow::Schedule& schedule, std::span<const int> c,
                     Rng& rng, double h = oracle::kDefaultProbeStep, double floor = flow::kDefaultTimeFloor);
M2Profile m2_profile(const flow::VelocityField& field, const flow::Schedule& schedule, const Mat& x_start,
                     std::span<const int> c, double h = oracle::kDefaultProbeStep,
                     double floor = flow::kDefaultTimeFloor);

}  // namespace cdm::eval
