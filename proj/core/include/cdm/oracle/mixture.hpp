#pragma once

// Closed forms for isotropic Gaussian mixtures pushed through the flow
// interpolation z = (1 - tau) x0 + tau eps. Component k has marginal
// N((1 - tau) mu_k, s_k^2 I) with s_k^2 = (1 - tau)^2 sigma_k^2 + tau^2.

#include <span>
#include <vector>

#include "cdm/flow/field.hpp"
#include "cdm/matrix.hpp"
#include "cdm/rng.hpp"

namespace cdm::oracle {

struct MixtureSpec {
  int dim = 1;
  std::vector<double> weights;
  Mat means;  // K x dim
  std::vector<double> variances;
  std::vector<int> labels;  // empty, or one class label per component

  int num_components() const { return static_cast<int>(weights.size()); }
  // 1 for unlabeled specs; otherwise max label + 1.
  int num_classes() const;
  // Throws ContractError on inconsistent sizes, weights not summing to 1
  // within 1e-12, non-positive variances or negative labels.
  void validate() const;

  // Components carrying `label`, weights renormalized.
  MixtureSpec conditional(int label) const;

  // One draw per entry of `classes` from the matching conditional.
  Mat sample(std::span<const int> classes, Rng& rng) const;
  // Unconditional draws; fills `classes` with each draw's component label.
  Mat sample(int n, Rng& rng, std::vector<int>* classes = nullptr) const;

  static MixtureSpec standard_normal(int dim);
  static MixtureSpec gaussian(const RowVec& mean, double variance);
  // K components evenly spaced on a circle in the plane; labels k mod classes.
  static MixtureSpec ring(int components, double radius, double variance, int classes);
};

// log p_tau(z) for each row of z.
Vec marginal_logpdf(const MixtureSpec& spec, const Mat& z, double tau);
// Component responsibilities p(k | z_tau), (B x K).
Mat responsibilities(const MixtureSpec& spec, const Mat& z, double tau);
// grad_z log p_tau(z), computed as responsibility-weighted component scores.
Mat score(const MixtureSpec& spec, const Mat& z, double tau);

// E[x0 | z_tau] as the responsibility-weighted per-component posterior means.
// Valid on [0, 1].
Mat posterior_mean_components(const MixtureSpec& spec, const Mat& z, double tau);
// E[x0 | z_tau] = (z + tau^2 score) / (1 - tau). Throws ContractError at tau = 1.
Mat posterior_mean_tweedie(const MixtureSpec& spec, const Mat& z, double tau);

// Posterior mean on [0, 1): the component route. Throws at tau >= 1 so both
// routes share one domain.
Mat posterior_mean(const MixtureSpec& spec, const Mat& z, double tau);

struct PosteriorRoutes {
  Mat components;
  Mat tweedie;
  double max_rel_error = 0.0;  // max |a - b| / max(1, |a|) over entries
};
PosteriorRoutes posterior_mean_routes(const MixtureSpec& spec, const Mat& z, double tau);

// (z - E[x0 | z]) / tau, the minimizer of the flow-matching objective.
// Defined on (floor, 1].
Mat optimal_velocity(const MixtureSpec& spec, const Mat& z, double tau,
                     double floor = flow::kDefaultTimeFloor);

struct MonteCarloMean {
  RowVec mean;
  RowVec std_error;
  double effective_samples = 0.0;
};
// Importance-weighted estimate of E[x0 | z] for a single point z, drawing x0
// from the data distribution and weighting by N(z; (1 - tau) x0, tau^2 I).
MonteCarloMean posterior_mean_monte_carlo(const MixtureSpec& spec, const RowVec& z, double tau, int samples,
                                          Rng& rng);

// Optimal velocity field of a labeled mixture, usable wherever a network
// field is. Condition c selects the label-c conditional; the null token
// (num_classes) selects the full mixture.
class MixtureField final : public flow::VelocityField {
 public:
  explicit MixtureField(MixtureSpec spec, double floor = flow::kDefaultTimeFloor);

  int dim() const override { return spec_.dim; }
  int null_condition() const override { return spec_.num_classes(); }
  using VelocityField::velocity;
  ad::Tensor velocity(const ad::Tensor& x, const Mat& t, std::span<const int> c) const override;

  const MixtureSpec& spec() const { return spec_; }
  const MixtureSpec& branch(int c) const;
  // Posterior mean for condition c, per row time.
  Mat denoise(const Mat& z, const Mat& t, std::span<const int> c) const;

 private:
  MixtureSpec spec_;
  std::vector<MixtureSpec> conditionals_;
  double floor_;
};

}  // namespace cdm::oracle
