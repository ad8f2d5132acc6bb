#include "cdm/oracle/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "cdm/error.hpp"

namespace cdm::oracle {
namespace {

double component_var(double sigma2, double tau) { return (1.0 - tau) * (1.0 - tau) * sigma2 + tau * tau; }

void check_tau(double tau, bool allow_one, const char* op) {
  if (!(tau >= 0.0 && (allow_one ? tau <= 1.0 : tau < 1.0)))
    throw ContractError(std::string(op) + ": tau " + std::to_string(tau) + " outside " +
                        (allow_one ? "[0, 1]" : "[0, 1)"));
}

// Per-component log(w_k N(z; (1 - tau) mu_k, s_k^2 I)) for one row.
void component_logs(const MixtureSpec& spec, const RowVec& z, double tau, std::vector<double>& out) {
  const int k_count = spec.num_components();
  out.resize(static_cast<std::size_t>(k_count));
  const double d = spec.dim;
  for (int k = 0; k < k_count; ++k) {
    const double s2 = component_var(spec.variances[static_cast<std::size_t>(k)], tau);
    const double dist2 = (z - (1.0 - tau) * spec.means.row(k)).squaredNorm();
    const double w = spec.weights[static_cast<std::size_t>(k)];
    out[static_cast<std::size_t>(k)] = (w > 0.0 ? std::log(w) : -INFINITY) -
                                       0.5 * d * std::log(2.0 * std::numbers::pi * s2) - 0.5 * dist2 / s2;
  }
}

double log_sum_exp(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

void check_points(const MixtureSpec& spec, const Mat& z, const char* op) {
  if (z.cols() != spec.dim)
    throw DimensionError(std::string(op) + ": points have dimension " + std::to_string(z.cols()) + ", spec has " +
                         std::to_string(spec.dim));
}

}  // namespace

int MixtureSpec::num_classes() const {
  if (labels.empty()) return 1;
  return *std::max_element(labels.begin(), labels.end()) + 1;
}

void MixtureSpec::validate() const {
  if (dim < 1) throw ContractError("MixtureSpec: dim must be >= 1");
  const auto k = weights.size();
  if (k == 0) throw ContractError("MixtureSpec: no components");
  if (means.rows() != static_cast<Eigen::Index>(k) || means.cols() != dim)
    throw ContractError("MixtureSpec: means must be K x dim");
  if (variances.size() != k) throw ContractError("MixtureSpec: need one variance per component");
  if (!labels.empty() && labels.size() != k) throw ContractError("MixtureSpec: need one label per component");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw ContractError("MixtureSpec: negative weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw ContractError("MixtureSpec: weights sum to " + std::to_string(total) + ", expected 1");
  for (double v : variances)
    if (!(v > 0.0) || !std::isfinite(v)) throw ContractError("MixtureSpec: variances must be positive");
  for (int l : labels)
    if (l < 0) throw ContractError("MixtureSpec: labels must be non-negative");
  if (!means.allFinite()) throw ContractError("MixtureSpec: non-finite mean");
}

MixtureSpec MixtureSpec::conditional(int label) const {
  if (labels.empty()) {
    if (label != 0) throw ContractError("MixtureSpec::conditional: unlabeled spec only has class 0");
    return *this;
  }
  MixtureSpec out;
  out.dim = dim;
  std::vector<int> rows;
  double total = 0.0;
  for (int k = 0; k < num_components(); ++k) {
    if (labels[static_cast<std::size_t>(k)] != label) continue;
    rows.push_back(k);
    total += weights[static_cast<std::size_t>(k)];
  }
  if (rows.empty() || total <= 0.0)
    throw ContractError("MixtureSpec::conditional: no mass on label " + std::to_string(label));
  out.means.resize(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.weights.push_back(weights[static_cast<std::size_t>(rows[i])] / total);
    out.means.row(static_cast<Eigen::Index>(i)) = means.row(rows[i]);
    out.variances.push_back(variances[static_cast<std::size_t>(rows[i])]);
    out.labels.push_back(label);
  }
  // Renormalization can leave the sum a few ulps off 1; fold it into the
  // largest weight.
  const double sum = std::accumulate(out.weights.begin(), out.weights.end(), 0.0);
  *std::max_element(out.weights.begin(), out.weights.end()) += 1.0 - sum;
  return out;
}

Mat MixtureSpec::sample(std::span<const int> classes, Rng& rng) const {
  const int n_classes = num_classes();
  std::vector<std::discrete_distribution<int>> pick;
  std::vector<std::vector<int>> members(static_cast<std::size_t>(n_classes));
  for (int k = 0; k < num_components(); ++k) members[labels.empty() ? 0 : labels[static_cast<std::size_t>(k)]].push_back(k);
  for (int c = 0; c < n_classes; ++c) {
    std::vector<double> w;
    for (int k : members[static_cast<std::size_t>(c)]) w.push_back(weights[static_cast<std::size_t>(k)]);
    pick.emplace_back(w.begin(), w.end());
  }
  Mat out(static_cast<Eigen::Index>(classes.size()), dim);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const int c = classes[i];
    if (c < 0 || c >= n_classes || members[static_cast<std::size_t>(c)].empty())
      throw ContractError("MixtureSpec::sample: class " + std::to_string(c) + " has no components");
    const int k = members[static_cast<std::size_t>(c)][static_cast<std::size_t>(pick[static_cast<std::size_t>(c)](rng.engine()))];
    const double sd = std::sqrt(variances[static_cast<std::size_t>(k)]);
    for (int j = 0; j < dim; ++j) out(static_cast<Eigen::Index>(i), j) = means(k, j) + sd * rng.normal();
  }
  return out;
}

Mat MixtureSpec::sample(int n, Rng& rng, std::vector<int>* classes) const {
  std::discrete_distribution<int> pick(weights.begin(), weights.end());
  Mat out(n, dim);
  if (classes) classes->resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int k = pick(rng.engine());
    const double sd = std::sqrt(variances[static_cast<std::size_t>(k)]);
    for (int j = 0; j < dim; ++j) out(i, j) = means(k, j) + sd * rng.normal();
    if (classes) (*classes)[static_cast<std::size_t>(i)] = labels.empty() ? 0 : labels[static_cast<std::size_t>(k)];
  }
  return out;
}

MixtureSpec MixtureSpec::standard_normal(int dim) { return gaussian(RowVec::Zero(dim), 1.0); }

MixtureSpec MixtureSpec::gaussian(const RowVec& mean, double variance) {
  MixtureSpec s;
  s.dim = static_cast<int>(mean.size());
  s.weights = {1.0};
  s.means = mean;
  s.variances = {variance};
  s.validate();
  return s;
}

MixtureSpec MixtureSpec::ring(int components, double radius, double variance, int classes) {
  MixtureSpec s;
  s.dim = 2;
  s.means.resize(components, 2);
  for (int k = 0; k < components; ++k) {
    const double angle = 2.0 * std::numbers::pi * k / components;
    s.means(k, 0) = radius * std::cos(angle);
    s.means(k, 1) = radius * std::sin(angle);
    s.weights.push_back(1.0 / components);
    s.variances.push_back(variance);
    s.labels.push_back(k % classes);
  }
  const double sum = std::accumulate(s.weights.begin(), s.weights.end(), 0.0);
  s.weights.back() += 1.0 - sum;
  s.validate();
  return s;
}

Vec marginal_logpdf(const MixtureSpec& spec, const Mat& z, double tau) {
  check_tau(tau, true, "marginal_logpdf");
  check_points(spec, z, "marginal_logpdf");
  Vec out(z.rows());
  std::vector<double> logs;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    component_logs(spec, z.row(i), tau, logs);
    out(i) = log_sum_exp(logs);
  }
  return out;
}

Mat responsibilities(const MixtureSpec& spec, const Mat& z, double tau) {
  check_tau(tau, true, "responsibilities");
  check_points(spec, z, "responsibilities");
  Mat r(z.rows(), spec.num_components());
  std::vector<double> logs;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    component_logs(spec, z.row(i), tau, logs);
    const double lse = log_sum_exp(logs);
    for (int k = 0; k < spec.num_components(); ++k) r(i, k) = std::exp(logs[static_cast<std::size_t>(k)] - lse);
  }
  return r;
}

Mat score(const MixtureSpec& spec, const Mat& z, double tau) {
  const Mat r = responsibilities(spec, z, tau);
  Mat out = Mat::Zero(z.rows(), spec.dim);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    for (int k = 0; k < spec.num_components(); ++k) {
      const double s2 = component_var(spec.variances[static_cast<std::size_t>(k)], tau);
      out.row(i) += r(i, k) * ((1.0 - tau) * spec.means.row(k) - z.row(i)) / s2;
    }
  }
  return out;
}

Mat posterior_mean_components(const MixtureSpec& spec, const Mat& z, double tau) {
  const Mat r = responsibilities(spec, z, tau);
  Mat out = Mat::Zero(z.rows(), spec.dim);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    for (int k = 0; k < spec.num_components(); ++k) {
      const double sigma2 = spec.variances[static_cast<std::size_t>(k)];
      const double s2 = component_var(sigma2, tau);
      const double gain = sigma2 * (1.0 - tau) / s2;
      out.row(i) += r(i, k) * (spec.means.row(k) + gain * (z.row(i) - (1.0 - tau) * spec.means.row(k)));
    }
  }
  return out;
}

Mat posterior_mean_tweedie(const MixtureSpec& spec, const Mat& z, double tau) {
  check_tau(tau, false, "posterior_mean_tweedie");
  return (z + tau * tau * score(spec, z, tau)) / (1.0 - tau);
}

Mat posterior_mean(const MixtureSpec& spec, const Mat& z, double tau) {
  check_tau(tau, false, "posterior_mean");
  return posterior_mean_components(spec, z, tau);
}

PosteriorRoutes posterior_mean_routes(const MixtureSpec& spec, const Mat& z, double tau) {
  PosteriorRoutes out;
  out.components = posterior_mean(spec, z, tau);
  out.tweedie = posterior_mean_tweedie(spec, z, tau);
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double a = out.components.data()[i];
    const double b = out.tweedie.data()[i];
    out.max_rel_error = std::max(out.max_rel_error, std::abs(a - b) / std::max(1.0, std::abs(a)));
  }
  return out;
}

Mat optimal_velocity(const MixtureSpec& spec, const Mat& z, double tau, double floor) {
  if (!(tau > floor && tau <= 1.0))
    throw ContractError("optimal_velocity: tau " + std::to_string(tau) + " outside (" + std::to_string(floor) +
                        ", 1]");
  return (z - posterior_mean_components(spec, z, tau)) / tau;
}

MonteCarloMean posterior_mean_monte_carlo(const MixtureSpec& spec, const RowVec& z, double tau, int samples,
                                          Rng& rng) {
  if (samples < 2) throw ContractError("posterior_mean_monte_carlo: need at least 2 samples");
  check_tau(tau, false, "posterior_mean_monte_carlo");
  if (!(tau > 0.0)) throw ContractError("posterior_mean_monte_carlo: tau must be > 0");
  const Mat x0 = spec.sample(samples, rng);
  Vec logw(samples);
  for (int i = 0; i < samples; ++i) logw(i) = -0.5 * (z - (1.0 - tau) * x0.row(i)).squaredNorm() / (tau * tau);
  const double m = logw.maxCoeff();
  Vec w = (logw.array() - m).exp().matrix();
  const double wsum = w.sum();
  w /= wsum;

  MonteCarloMean out;
  out.mean = w.transpose() * x0;
  // Delta-method standard error of a self-normalized estimator.
  out.std_error = RowVec::Zero(spec.dim);
  for (int i = 0; i < samples; ++i)
    out.std_error.array() += w(i) * w(i) * (x0.row(i) - out.mean).array().square();
  out.std_error = out.std_error.array().sqrt().matrix();
  out.effective_samples = 1.0 / w.squaredNorm();
  return out;
}

MixtureField::MixtureField(MixtureSpec spec, double floor) : spec_(std::move(spec)), floor_(floor) {
  spec_.validate();
  for (int c = 0; c < spec_.num_classes(); ++c) conditionals_.push_back(spec_.conditional(c));
}

const MixtureSpec& MixtureField::branch(int c) const {
  if (c == null_condition()) return spec_;
  if (c < 0 || c > null_condition()) throw ContractError("MixtureField: condition " + std::to_string(c) + " out of range");
  return conditionals_[static_cast<std::size_t>(c)];
}

Mat MixtureField::denoise(const Mat& z, const Mat& t, std::span<const int> c) const {
  if (z.rows() != t.rows() || static_cast<std::size_t>(z.rows()) != c.size())
    throw DimensionError("MixtureField: batch sizes of z, t and c differ");
  Mat out(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    out.row(i) = posterior_mean_components(branch(c[static_cast<std::size_t>(i)]), z.row(i), t(i, 0));
  return out;
}

ad::Tensor MixtureField::velocity(const ad::Tensor& x, const Mat& t, std::span<const int> c) const {
  flow::check_times(t, floor_, "MixtureField::velocity");
  const Mat& z = x.value();
  const Mat d = denoise(z, t, c);
  Mat v(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) v.row(i) = (z.row(i) - d.row(i)) / t(i, 0);
  return ad::Tensor::constant(std::move(v));
}

}  // namespace cdm::oracle
