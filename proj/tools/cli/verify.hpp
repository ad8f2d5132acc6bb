#pragma once

// The invariant suite behind `cdmlab verify`: closed-form identities of the
// mixture oracle, loss-gradient identities with oracle fields in place of
// networks, Euler error orders, and the exact fixed points of the losses.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cdm/matrix.hpp"
#include "cdm/oracle/mixture.hpp"

namespace cdm::cli {

struct CheckResult {
  std::string name;
  std::string identity;  // one-line statement of what is compared
  double measured = 0.0;
  double tolerance = 0.0;
  std::string relation;  // how measured relates to tolerance when passing: "<=", ">=" or "=="
  bool passed = false;
  std::string detail;
};

// Substitutable pieces, so a corrupted implementation can be shown to fail.
struct VerifyHooks {
  std::function<Mat(const oracle::MixtureSpec&, const Mat&, double)> tweedie = oracle::posterior_mean_tweedie;
};

struct VerifyOptions {
  std::uint64_t seed = 20240601;
  int tweedie_cases = 1000;
  double tweedie_tolerance = 1e-10;
  int gradient_batch = 4096;
  double gradient_min_cosine = 0.99;
  double local_slope = 2.0;
  double local_slope_tolerance = 0.1;
  double global_slope = 1.0;
  double global_slope_tolerance = 0.15;
  double material_tolerance = 2e-2;  // relative, finite-difference probe against the closed form
  double monte_carlo_sigmas = 5.0;
};

CheckResult check_tweedie(const VerifyOptions& options, const VerifyHooks& hooks = {});
// Single-Gaussian optimal velocity against the analytic flow.
CheckResult check_gaussian_velocity(const VerifyOptions& options);
CheckResult check_monte_carlo_posterior(const VerifyOptions& options);
CheckResult check_ca_gradient(const VerifyOptions& options);
CheckResult check_dm_gradient(const VerifyOptions& options);
CheckResult check_euler_local_order(const VerifyOptions& options);
CheckResult check_euler_global_order(const VerifyOptions& options);
CheckResult check_material_derivative(const VerifyOptions& options);
// Exactly zero student gradient: alpha = 0, matched guidance branches,
// fake = real for DM and for CDM.
std::vector<CheckResult> check_fixed_points(const VerifyOptions& options);
// Zero stride with shared draws: cdm_loss and dm_loss agree bit for bit.
CheckResult check_zero_stride(const VerifyOptions& options);

std::vector<CheckResult> run_verify(const VerifyOptions& options = {}, const VerifyHooks& hooks = {});

// name,identity,measured,relation,tolerance,status
std::string verify_csv(const std::vector<CheckResult>& results);
std::string format_check(const CheckResult& r);

}  // namespace cdm::cli
