#include "cdm/eval/error_order.hpp"

#include <algorithm>
#include <cmath>

#include "cdm/error.hpp"
#include "cdm/eval/metrics.hpp"

namespace cdm::eval {
namespace {

Mat euler(const flow::VelocityField& field, Mat x, std::span<const int> c, double from, double to, int steps) {
  const double h = (from - to) / steps;
  for (int j = 0; j < steps; ++j) {
    const double t = from - j * h;
    x -= h * field.velocity(x, flow::time_column(x.rows(), t), c);
  }
  return x;
}

double max_row_norm(const Mat& m) { return m.rows() == 0 ? 0.0 : m.rowwise().norm().maxCoeff(); }

}  // namespace

ad::Tensor GaussianFlowField::velocity(const ad::Tensor& x, const Mat& t, std::span<const int> c) const {
  flow::check_times(t, 0.0, "GaussianFlowField::velocity");
  if (static_cast<std::size_t>(x.rows()) != c.size() || t.rows() != x.rows())
    throw DimensionError("GaussianFlowField::velocity: batch sizes differ");
  Mat v(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < v.rows(); ++i) v.row(i) = flow_.velocity(x.value().row(i), t(i, 0));
  return ad::Tensor::constant(std::move(v));
}

ErrorOrderResult euler_error_order(const flow::VelocityField& field, const Mat& x_start, std::span<const int> c,
                                   const ErrorOrderConfig& config, const Transport& exact) {
  if (config.step_counts.size() < 2) throw ContractError("euler_error_order: need at least two step counts");
  if (!(config.t_start > config.t_end)) throw ContractError("euler_error_order: t_start must exceed t_end");

  const Transport reference = exact ? exact : Transport([&](const Mat& z, double from, double to) {
    return euler(field, z, c, from, to,
                 std::max(1, static_cast<int>(std::lround(config.reference_steps * (from - to) /
                                                          (config.t_start - config.t_end)))));
  });

  ErrorOrderResult out;
  for (int n : config.step_counts) {
    if (n < 1) throw ContractError("euler_error_order: step counts must be >= 1");
    const double h = (config.t_start - config.t_end) / n;
    out.step_sizes.push_back(h);

    double local = 0.0;
    Mat exact_state = x_start;
    for (int j = 0; j < n; ++j) {
      const double t = config.t_start - j * h;
      const double next = config.t_start - (j + 1) * h;
      const Mat one_step = euler(field, exact_state, c, t, next, 1);
      const Mat exact_next = reference(exact_state, t, next);
      local = std::max(local, max_row_norm(one_step - exact_next));
      exact_state = exact_next;
    }
    out.local_errors.push_back(local);

    const Mat approx = euler(field, x_start, c, config.t_start, config.t_end, n);
    const Mat truth = exact ? exact(x_start, config.t_start, config.t_end)
                            : euler(field, x_start, c, config.t_start, config.t_end, config.reference_steps);
    out.global_errors.push_back(max_row_norm(approx - truth));
  }

  const double worst = std::max(*std::max_element(out.local_errors.begin(), out.local_errors.end()),
                                *std::max_element(out.global_errors.begin(), out.global_errors.end()));
  out.exact = worst < config.exact_threshold;
  if (!out.exact) {
    out.local_slope = log_log_slope(out.step_sizes, out.local_errors);
    out.global_slope = log_log_slope(out.step_sizes, out.global_errors);
  }
  return out;
}

ErrorOrderResult euler_error_order(const oracle::GaussianFlow& flow, const Mat& x_start,
                                   const ErrorOrderConfig& config) {
  GaussianFlowField field(flow);
  const std::vector<int> c(static_cast<std::size_t>(x_start.rows()), 0);
  return euler_error_order(field, x_start, c, config,
                           [&flow](const Mat& z, double from, double to) { return flow.transport(z, from, to); });
}

M2Profile m2_profile(const flow::VelocityField& field, const flow::Schedule& schedule, std::span<const int> c,
                     Rng& rng, double h, double floor) {
  return m2_profile(field, schedule, rng.normal(static_cast<Eigen::Index>(c.size()), field.dim()), c, h, floor);
}

M2Profile m2_profile(const flow::VelocityField& field, const flow::Schedule& schedule, const Mat& x_start,
                     std::span<const int> c, double h, double floor) {
  M2Profile out;
  std::vector<double> norms;
  Mat x = x_start;
  for (int j = 0; j < schedule.size(); ++j) {
    const double t = schedule[j];
    if (t - h > floor) {
      const Vec n = oracle::material_derivative(field, x, t, c, h, floor).rowwise().norm();
      out.times.push_back(t);
      out.time_sup.push_back(n.size() ? n.maxCoeff() : 0.0);
      norms.insert(norms.end(), n.data(), n.data() + n.size());
    }
    if (j + 1 < schedule.size()) x -= (t - schedule[j + 1]) * field.velocity(x, flow::time_column(x.rows(), t), c);
  }
  out.probes = static_cast<long>(norms.size());
  if (norms.empty()) return out;
  out.sup = *std::max_element(norms.begin(), norms.end());
  double s = 0.0;
  for (double v : norms) s += v;
  out.mean = s / static_cast<double>(norms.size());
  out.q50 = quantile(norms, 0.5);
  out.q90 = quantile(norms, 0.9);
  out.q99 = quantile(norms, 0.99);
  return out;
}

}  // namespace cdm::eval
