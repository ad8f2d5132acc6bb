#include "cli/verify.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cdm/distill/losses.hpp"
#include "cdm/eval/error_order.hpp"
#include "cdm/flow/velocity_model.hpp"
#include "cdm/io/keyvalue.hpp"
#include "cdm/oracle/gaussian_flow.hpp"
#include "cdm/rng.hpp"

namespace cdm::cli {
namespace {

CheckResult make(std::string name, std::string identity, double measured, const std::string& relation,
                 double tolerance) {
  CheckResult r{std::move(name), std::move(identity), measured, tolerance, relation, false, {}};
  if (relation == "<=") r.passed = measured <= tolerance;
  else if (relation == ">=") r.passed = measured >= tolerance;
  else r.passed = measured == tolerance;
  return r;
}

oracle::MixtureSpec random_mixture(Rng& rng) {
  oracle::MixtureSpec s;
  s.dim = rng.uniform_int(1, 4);
  const int k = rng.uniform_int(1, 5);
  s.means = 2.0 * rng.normal(k, s.dim);
  double total = 0.0;
  for (int i = 0; i < k; ++i) {
    s.weights.push_back(rng.uniform(0.05, 1.0));
    total += s.weights.back();
    s.variances.push_back(rng.uniform(0.02, 2.0));
  }
  for (auto& w : s.weights) w /= total;
  return s;
}

Mat noised(const oracle::MixtureSpec& spec, int n, double tau, Rng& rng) {
  const Mat x0 = spec.sample(n, rng);
  return flow::interpolate(x0, rng.normal(n, spec.dim), tau);
}

double cosine(const Mat& a, const Mat& b) {
  const double na = a.norm(), nb = b.norm();
  return na == 0.0 || nb == 0.0 ? 0.0 : (a.array() * b.array()).sum() / (na * nb);
}

// Scores per row at per-row times, from the closed-form mixture marginals.
Mat row_scores(const oracle::MixtureSpec& spec, const Mat& z, const Mat& tau) {
  Mat out(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) out.row(i) = oracle::score(spec, z.row(i), tau(i, 0));
  return out;
}

Mat draw_tau(int n, double lo, double hi, Rng& rng) {
  Mat t(n, 1);
  for (int i = 0; i < n; ++i) t(i, 0) = rng.uniform(lo, hi);
  return t;
}

double max_abs_grad(const flow::VelocityModel& m) {
  double g = 0.0;
  for (const auto& p : m.parameters()) g = std::max(g, p.grad().cwiseAbs().maxCoeff());
  return g;
}

flow::VelocityModel small_model(std::uint64_t seed, int classes) {
  Rng rng(seed);
  flow::ModelConfig mc;
  mc.dim = 2;
  mc.num_classes = classes;
  mc.hidden = 16;
  mc.depth = 2;
  mc.time_features = 8;
  mc.cond_features = 4;
  return flow::VelocityModel(mc, rng);
}

}  // namespace

CheckResult check_tweedie(const VerifyOptions& options, const VerifyHooks& hooks) {
  Rng rng(options.seed);
  double worst = 0.0;
  for (int n = 0; n < options.tweedie_cases; ++n) {
    const oracle::MixtureSpec spec = random_mixture(rng);
    const double tau = rng.uniform(0.05, 0.95);
    const Mat z = noised(spec, 1, tau, rng);
    const Mat a = oracle::posterior_mean_components(spec, z, tau);
    const Mat b = hooks.tweedie(spec, z, tau);
    for (Eigen::Index i = 0; i < a.size(); ++i)
      worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]) / std::max(1.0, std::abs(a.data()[i])));
  }
  auto r = make("tweedie", "responsibility-weighted posterior mean == (z + tau^2 score) / (1 - tau)", worst, "<=",
                options.tweedie_tolerance);
  r.detail = std::to_string(options.tweedie_cases) + " random mixtures, tau in [0.05, 0.95]";
  return r;
}

CheckResult check_gaussian_velocity(const VerifyOptions& options) {
  Rng rng(options.seed + 1);
  double worst = 0.0;
  for (int n = 0; n < 50; ++n) {
    const RowVec mean = rng.normal(1, 3);
    const double var = rng.uniform(0.01, 3.0);
    const oracle::GaussianFlow flow(mean, var);
    const auto spec = oracle::MixtureSpec::gaussian(mean, var);
    const double tau = rng.uniform(0.01, 1.0);
    const Mat z = rng.normal(8, 3);
    const Mat diff = oracle::optimal_velocity(spec, z, tau) - flow.velocity(z, tau);
    worst = std::max(worst, diff.cwiseAbs().maxCoeff() / std::max(1.0, flow.velocity(z, tau).cwiseAbs().maxCoeff()));
  }
  return make("gaussian_velocity", "mixture optimal velocity == analytic single-Gaussian velocity", worst, "<=",
              1e-10);
}

CheckResult check_monte_carlo_posterior(const VerifyOptions& options) {
  Rng rng(options.seed + 2);
  double worst = 0.0;
  for (int n = 0; n < 20; ++n) {
    const oracle::MixtureSpec spec = random_mixture(rng);
    const double tau = rng.uniform(0.1, 0.9);
    const Mat z = noised(spec, 1, tau, rng);
    const Mat exact = oracle::posterior_mean(spec, z, tau);
    const auto mc = oracle::posterior_mean_monte_carlo(spec, z.row(0), tau, 20000, rng);
    for (Eigen::Index j = 0; j < exact.cols(); ++j) {
      const double se = std::max(mc.std_error(j), 1e-12);
      worst = std::max(worst, std::abs(mc.mean(j) - exact(0, j)) / se);
    }
  }
  auto r = make("posterior_monte_carlo", "closed-form posterior mean within k standard errors of importance sampling",
                worst, "<=", options.monte_carlo_sigmas);
  r.detail = "20 mixtures x 20000 prior draws; measured is the largest |error| / SE";
  return r;
}

CheckResult check_ca_gradient(const VerifyOptions& options) {
  Rng rng(options.seed + 3);
  const auto spec = oracle::MixtureSpec::ring(8, 2.0, 0.05, 2);
  const oracle::MixtureField real(spec);
  const int b = options.gradient_batch;
  std::vector<int> c(static_cast<std::size_t>(b));
  for (auto& v : c) v = rng.uniform_int(0, 1);
  const ad::Tensor x_hat0 = ad::Tensor::parameter(1.5 * rng.normal(b, 2));
  const Mat tau = draw_tau(b, 0.05, 0.95, rng);
  const Mat eps = rng.normal(b, 2);
  const double alpha = 3.0;
  const auto term = distill::ca_loss(real, x_hat0, tau, eps, c, alpha);
  ad::backward(term.loss);

  // D(z, c) - D(z, null) = tau^2 / (1 - tau) * grad log p(c | z).
  const Mat z = flow::interpolate(x_hat0.value(), eps, tau);
  Mat expected(b, 2);
  const Mat s_null = row_scores(spec, z, tau);
  for (int i = 0; i < b; ++i) {
    const Mat s_c = oracle::score(spec.conditional(c[static_cast<std::size_t>(i)]), z.row(i), tau(i, 0));
    const double t = tau(i, 0);
    expected.row(i) = term.w(i) * alpha * t * t / (1.0 - t) * (s_c.row(0) - s_null.row(i));
  }
  auto r = make("ca_gradient", "-dL_ca/dx_hat0 parallel to w alpha tau^2/(1-tau) grad log p(c | z)",
                cosine(-x_hat0.grad(), expected), ">=", options.gradient_min_cosine);
  r.detail = "batch " + std::to_string(b);
  return r;
}

CheckResult check_dm_gradient(const VerifyOptions& options) {
  Rng rng(options.seed + 4);
  const auto real_spec = oracle::MixtureSpec::ring(8, 2.0, 0.05, 2);
  const auto fake_spec = oracle::MixtureSpec::ring(8, 1.4, 0.2, 2);
  const oracle::MixtureField real(real_spec), fake(fake_spec);
  const int b = options.gradient_batch;
  std::vector<int> c(static_cast<std::size_t>(b));
  for (auto& v : c) v = rng.uniform_int(0, 1);
  const ad::Tensor x_hat0 = ad::Tensor::parameter(1.5 * rng.normal(b, 2));
  const Mat tau = draw_tau(b, 0.05, 0.95, rng);
  const Mat eps = rng.normal(b, 2);
  const auto term = distill::dm_loss(real, fake, x_hat0, tau, eps, c);
  ad::backward(term.loss);

  const Mat z = flow::interpolate(x_hat0.value(), eps, tau);
  Mat expected(b, 2);
  for (int i = 0; i < b; ++i) {
    const int ci = c[static_cast<std::size_t>(i)];
    const double t = tau(i, 0);
    const Mat diff = oracle::score(real_spec.conditional(ci), z.row(i), t) -
                     oracle::score(fake_spec.conditional(ci), z.row(i), t);
    expected.row(i) = term.w(i) * t * t / (1.0 - t) * diff.row(0);
  }
  auto r = make("dm_gradient", "-dL_dm/dx_hat0 parallel to w tau^2/(1-tau) (score_real - score_fake)",
                cosine(-x_hat0.grad(), expected), ">=", options.gradient_min_cosine);
  r.detail = "batch " + std::to_string(b);
  return r;
}

namespace {

eval::ErrorOrderResult gaussian_orders(const VerifyOptions& options) {
  Rng rng(options.seed + 5);
  const oracle::GaussianFlow flow(RowVec::Zero(2), 1.0);
  return eval::euler_error_order(flow, rng.normal(64, 2));
}

}  // namespace

CheckResult check_euler_local_order(const VerifyOptions& options) {
  const auto res = gaussian_orders(options);
  auto r = make("euler_local_order", "log-log slope of one-step Euler error against h",
                std::abs(res.local_slope - options.local_slope), "<=", options.local_slope_tolerance);
  r.detail = "slope " + io::format_double(res.local_slope) + ", expected " + io::format_double(options.local_slope);
  return r;
}

CheckResult check_euler_global_order(const VerifyOptions& options) {
  const auto res = gaussian_orders(options);
  auto r = make("euler_global_order", "log-log slope of end-point Euler error against h",
                std::abs(res.global_slope - options.global_slope), "<=", options.global_slope_tolerance);
  r.detail = "slope " + io::format_double(res.global_slope) + ", expected " + io::format_double(options.global_slope);
  return r;
}

CheckResult check_material_derivative(const VerifyOptions& options) {
  Rng rng(options.seed + 6);
  RowVec mean(2);
  mean << 0.8, -0.5;
  const oracle::GaussianFlow flow(mean, 0.3);
  const eval::GaussianFlowField field(flow);
  const Mat z = rng.normal(32, 2);
  const std::vector<int> c(32, 0);
  double worst = 0.0;
  for (double tau : {0.2, 0.5, 0.8}) {
    const Mat probe = oracle::material_derivative(field, z, tau, c, 1e-4, 0.0);
    const Mat exact = -flow.material_derivative(z, tau);
    worst = std::max(worst, (probe - exact).norm() / exact.norm());
  }
  return make("material_derivative", "finite-difference probe == -(d_tau v + J v v) on the Gaussian flow", worst, "<=",
              options.material_tolerance);
}

std::vector<CheckResult> check_fixed_points(const VerifyOptions& options) {
  Rng rng(options.seed + 7);
  const int b = 64;
  std::vector<int> c(static_cast<std::size_t>(b));
  for (auto& v : c) v = rng.uniform_int(0, 1);
  const Mat x = rng.normal(b, 2);
  const Mat t = draw_tau(b, 0.1, 1.0, rng);
  const Mat tau = draw_tau(b, 0.05, 0.95, rng);
  const Mat eps = rng.normal(b, 2);
  const flow::VelocityModel student = small_model(options.seed, 2);
  const flow::VelocityModel teacher = small_model(options.seed + 100, 2);
  std::vector<CheckResult> out;

  auto run = [&](const std::string& name, const std::string& identity, auto&& loss_fn) {
    for (auto& p : student.parameters()) p.zero_grad();
    const ad::Tensor x_hat0 = flow::data_prediction(student, ad::Tensor::constant(x), t, c);
    ad::backward(loss_fn(x_hat0));
    out.push_back(make(name, identity, max_abs_grad(student), "==", 0.0));
  };

  run("fixed_point_alpha0", "CA with alpha = 0 gives zero student gradient",
      [&](const ad::Tensor& p) { return distill::ca_loss(teacher, p, tau, eps, c, 0.0).loss; });
  RowVec a(2), slope(2);
  a << 0.3, -0.2;
  slope << 1.0, 0.5;
  const oracle::AffineField matched(a, slope);
  run("fixed_point_matched_cfg", "CA with identical conditional and null branches gives zero student gradient",
      [&](const ad::Tensor& p) { return distill::ca_loss(matched, p, tau, eps, c, 7.0).loss; });
  run("fixed_point_dm", "DM with fake = real gives zero student gradient",
      [&](const ad::Tensor& p) { return distill::dm_loss(teacher, teacher, p, tau, eps, c).loss; });

  for (auto& p : student.parameters()) p.zero_grad();
  distill::CdmInputs in;
  in.x_anchor = x;
  in.t_anchor = 0.7;
  in.t_prime = draw_tau(b, 0.05, 0.7, rng);
  in.tau = tau;
  in.eps = eps;
  const auto cdm = distill::cdm_loss(student, teacher, teacher, in, c);
  ad::backward(cdm.term.loss);
  out.push_back(make("fixed_point_cdm", "CDM with fake = real gives zero student gradient", max_abs_grad(student), "==",
                     0.0));
  return out;
}

CheckResult check_zero_stride(const VerifyOptions& options) {
  Rng rng(options.seed + 8);
  const int b = 64;
  std::vector<int> c(static_cast<std::size_t>(b));
  for (auto& v : c) v = rng.uniform_int(0, 1);
  const flow::VelocityModel student = small_model(options.seed + 1, 2);
  const flow::VelocityModel real = small_model(options.seed + 2, 2);
  const flow::VelocityModel fake = small_model(options.seed + 3, 2);
  const Mat x = rng.normal(b, 2);
  const double t_anchor = 0.6;
  const Mat tau = draw_tau(b, 0.05, 0.95, rng);
  const Mat eps = rng.normal(b, 2);

  for (auto& p : student.parameters()) p.zero_grad();
  const ad::Tensor x_hat0 = flow::data_prediction(student, ad::Tensor::constant(x), flow::time_column(b, t_anchor), c);
  const auto dm = distill::dm_loss(real, fake, x_hat0, tau, eps, c);
  ad::backward(dm.loss);
  std::vector<Mat> dm_grads;
  for (const auto& p : student.parameters()) dm_grads.push_back(p.grad());

  for (auto& p : student.parameters()) p.zero_grad();
  distill::CdmInputs in;
  in.x_anchor = x;
  in.t_anchor = t_anchor;
  in.t_prime = flow::time_column(b, t_anchor);
  in.tau = tau;
  in.eps = eps;
  const auto cdm = distill::cdm_loss(student, real, fake, in, c);
  ad::backward(cdm.term.loss);

  double diff = std::abs(cdm.term.loss.item() - dm.loss.item());
  bool identical = cdm.term.loss.item() == dm.loss.item();
  const auto params = student.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Mat g = params[k].grad();
    diff = std::max(diff, (g - dm_grads[k]).cwiseAbs().maxCoeff());
    identical = identical && g == dm_grads[k];
  }
  auto r = make("zero_stride", "cdm_loss at t' = t_i with shared draws == dm_loss (value and gradient)", diff, "==",
                0.0);
  r.passed = identical;
  r.detail = identical ? "bitwise identical" : "differs";
  return r;
}

std::vector<CheckResult> run_verify(const VerifyOptions& options, const VerifyHooks& hooks) {
  std::vector<CheckResult> out;
  out.push_back(check_tweedie(options, hooks));
  out.push_back(check_gaussian_velocity(options));
  out.push_back(check_monte_carlo_posterior(options));
  out.push_back(check_ca_gradient(options));
  out.push_back(check_dm_gradient(options));
  out.push_back(check_euler_local_order(options));
  out.push_back(check_euler_global_order(options));
  out.push_back(check_material_derivative(options));
  for (auto& r : check_fixed_points(options)) out.push_back(std::move(r));
  out.push_back(check_zero_stride(options));
  return out;
}

std::string verify_csv(const std::vector<CheckResult>& results) {
  std::ostringstream out;
  out << "name,identity,measured,relation,tolerance,status\n";
  for (const auto& r : results)
    out << r.name << ",\"" << r.identity << "\"," << io::format_double(r.measured) << "," << r.relation << ","
        << io::format_double(r.tolerance) << "," << (r.passed ? "PASS" : "FAIL") << "\n";
  return out.str();
}

std::string format_check(const CheckResult& r) {
  std::ostringstream out;
  out << (r.passed ? "PASS " : "FAIL ") << r.name << ": measured " << io::format_double(r.measured) << " "
      << r.relation << " " << io::format_double(r.tolerance);
  if (!r.detail.empty()) out << " (" << r.detail << ")";
  return out.str();
}

}  // namespace cdm::cli
