#pragma once

// The student objectives. Every function takes its random draws explicitly so
// callers can pin them; the trainer supplies them from one seeded stream.

#include <span>
#include <string_view>

#include "cdm/ad/tensor.hpp"
#include "cdm/flow/field.hpp"
#include "cdm/matrix.hpp"

namespace cdm::distill {

struct WeightClamp {
  double min = 1e-4;
  double max = 1e4;
};

// Per row: 1 / mean_j |teacher_ij - student_ij|, clamped. Plain values, so
// nothing upstream of w ever receives gradient through it.
Vec weight_factor(const Mat& teacher_pred, const Mat& student_pred, const WeightClamp& clamp = {});

struct TermResult {
  ad::Tensor loss;  // 1x1; mean over rows of 0.5 ||pred - target||^2
  Vec w;
  int clamped = 0;  // rows whose w hit either bound
};

// 0.5 ||x_hat0 - sg[x_hat0 + w alpha (D_real(z, tau, c) - D_real(z, tau, null))]||^2
// with z = (1 - tau) sg[x_hat0] + tau eps.
TermResult ca_loss(const flow::VelocityField& real, const ad::Tensor& x_hat0, const Mat& tau, const Mat& eps,
                   std::span<const int> c, double alpha, const WeightClamp& clamp = {},
                   double floor = flow::kDefaultTimeFloor);

// 0.5 ||pred - sg[pred + w (D_real - D_fake)(z, tau, c)]||^2 with
// z = (1 - tau) source + tau eps. `source` is normally pred's own value.
TermResult matching_loss(const flow::VelocityField& real, const flow::VelocityField& fake,
                         const ad::Tensor& pred, const Mat& source, const Mat& tau, const Mat& eps,
                         std::span<const int> c, const WeightClamp& clamp = {},
                         double floor = flow::kDefaultTimeFloor);

TermResult dm_loss(const flow::VelocityField& real, const flow::VelocityField& fake, const ad::Tensor& x_hat0,
                   const Mat& tau, const Mat& eps, std::span<const int> c, const WeightClamp& clamp = {},
                   double floor = flow::kDefaultTimeFloor);

// How the off-anchor latent x' at time t' is produced.
enum class Perturbation {
  velocity,  // x' = x_ti + (t' - t_i) v_student(x_ti, t_i)
  gaussian,  // x' = (1 - t') sg[x_hat0] + t' eps, a re-noising of the anchor prediction
  none,      // x' = x_ti at t' = t_i: supervision stays on the trajectory
};
enum class Extrapolation { detached, attached };
// Which clean estimate the teachers re-noise for the CDM target.
enum class CdmTarget { local, full_trajectory };

Perturbation parse_perturbation(std::string_view s);
std::string_view to_string(Perturbation p);
Extrapolation parse_extrapolation(std::string_view s);
std::string_view to_string(Extrapolation e);
CdmTarget parse_cdm_target(std::string_view s);
std::string_view to_string(CdmTarget t);

struct CdmInputs {
  Mat x_anchor;        // x_ti, detached
  double t_anchor = 1.0;
  Mat t_prime;         // (B x 1)
  Mat tau;             // (B x 1) re-noising time
  Mat eps;             // re-noising noise
  Mat eps_perturb;     // only read by Perturbation::gaussian
  Mat x_hat0_anchor;   // sg[x_hat0^(i)], only read by Perturbation::gaussian
  Mat full_trajectory; // only read by CdmTarget::full_trajectory
};

struct CdmOptions {
  Perturbation perturbation = Perturbation::velocity;
  Extrapolation extrapolation = Extrapolation::detached;
  CdmTarget target = CdmTarget::local;
};

struct CdmResult {
  TermResult term;
  Mat x_prime;
  Mat t_used;  // the times the student was evaluated at
};

// Builds x', evaluates x_hat0^(i') = D_student(x', t') with gradient and
// applies matching_loss to it.
CdmResult cdm_loss(const flow::VelocityField& student, const flow::VelocityField& real,
                   const flow::VelocityField& fake, const CdmInputs& in, std::span<const int> c,
                   const CdmOptions& options = {}, const WeightClamp& clamp = {},
                   double floor = flow::kDefaultTimeFloor);

}  // namespace cdm::distill
