#include <doctest.h>

#include <cmath>
#include <numbers>

#include "cdm/error.hpp"
#include "cdm/flow/field.hpp"
#include "cdm/oracle/gaussian_flow.hpp"
#include "cdm/oracle/mixture.hpp"
#include "cdm/oracle/spec_io.hpp"

using namespace cdm;
using namespace cdm::oracle;

namespace {

MixtureSpec random_spec(Rng& rng, int dim, int k, bool labeled = false) {
  MixtureSpec s;
  s.dim = dim;
  s.means = 2.0 * rng.normal(k, dim);
  double total = 0.0;
  for (int i = 0; i < k; ++i) {
    s.weights.push_back(rng.uniform(0.1, 1.0));
    total += s.weights.back();
    s.variances.push_back(rng.uniform(0.02, 1.0));
    if (labeled) s.labels.push_back(i % 2);
  }
  for (auto& w : s.weights) w /= total;
  // Renormalizing can leave the sum a few ulps off 1; push the slack into the last weight.
  double sum = 0.0;
  for (int i = 0; i + 1 < k; ++i) sum += s.weights[static_cast<std::size_t>(i)];
  s.weights.back() = 1.0 - sum;
  return s;
}

double max_abs(const Mat& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("standard Gaussian closed forms") {
  const auto spec = MixtureSpec::standard_normal(3);
  Rng rng(1);
  const Mat z = rng.normal(10, 3);
  for (double tau : {0.0, 0.2, 0.5, 0.8}) {
    const double v = (1 - tau) * (1 - tau) + tau * tau;
    CHECK(max_abs(score(spec, z, tau) + z / v) < 1e-12);
    if (tau < 1.0) CHECK(max_abs(posterior_mean(spec, z, tau) - (1 - tau) * z / v) < 1e-12);
    const Vec lp = marginal_logpdf(spec, z, tau);
    for (int i = 0; i < 10; ++i) {
      const double exact = -0.5 * z.row(i).squaredNorm() / v - 1.5 * std::log(2 * std::numbers::pi * v);
      CHECK(std::abs(lp(i) - exact) < 1e-12);
    }
  }
}

TEST_CASE("tau zero gives the data density and identity posterior") {
  Rng rng(2);
  const auto spec = random_spec(rng, 2, 3);
  const Mat z = rng.normal(8, 2);
  CHECK(max_abs(posterior_mean(spec, z, 0.0) - z) < 1e-12);
  const Vec lp = marginal_logpdf(spec, z, 0.0);
  for (int i = 0; i < 8; ++i) {
    double p = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double s2 = spec.variances[static_cast<std::size_t>(k)];
      p += spec.weights[static_cast<std::size_t>(k)] *
           std::exp(-0.5 * (z.row(i) - spec.means.row(k)).squaredNorm() / s2) / (2 * std::numbers::pi * s2);
    }
    CHECK(std::abs(lp(i) - std::log(p)) < 1e-10);
  }
}

TEST_CASE("score is the gradient of the log density") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int dim = rng.uniform_int(1, 3);
    const auto spec = random_spec(rng, dim, rng.uniform_int(1, 4));
    const double tau = rng.uniform(0.05, 0.95);
    const Mat z = rng.normal(3, dim);
    const Mat s = score(spec, z, tau);
    const double h = 1e-5;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < dim; ++j) {
        Mat up = z, down = z;
        up(i, j) += h;
        down(i, j) -= h;
        const double fd = (marginal_logpdf(spec, up, tau)(i) - marginal_logpdf(spec, down, tau)(i)) / (2 * h);
        CHECK(std::abs(fd - s(i, j)) < 1e-6 * std::max(1.0, std::abs(fd)));
      }
  }
}

TEST_CASE("marginal density integrates to one") {
  Rng rng(4);
  const auto spec = random_spec(rng, 1, 3);
  for (double tau : {0.1, 0.5, 0.9}) {
    const double lo = -15, hi = 15;
    const int n = 30000;
    Mat grid(n + 1, 1);
    for (int i = 0; i <= n; ++i) grid(i, 0) = lo + (hi - lo) * i / n;
    const Vec lp = marginal_logpdf(spec, grid, tau);
    double integral = 0.0;
    for (int i = 0; i <= n; ++i) integral += ((i == 0 || i == n) ? 0.5 : 1.0) * std::exp(lp(i));
    integral *= (hi - lo) / n;
    CHECK(std::abs(integral - 1.0) < 1e-8);
  }
}

TEST_CASE("symmetric midpoint has zero score") {
  MixtureSpec spec;
  spec.dim = 2;
  spec.weights = {0.5, 0.5};
  spec.means = Mat(2, 2);
  spec.means << -1.0, 0.0, 1.0, 0.0;
  spec.variances = {0.3, 0.3};
  const Mat s = score(spec, Mat::Zero(1, 2), 0.4);
  CHECK(max_abs(s) < 1e-15);
}

TEST_CASE("Tweedie and component routes agree") {
  Rng rng(5);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int dim = rng.uniform_int(1, 4);
    const auto spec = random_spec(rng, dim, rng.uniform_int(1, 5));
    const double tau = rng.uniform(0.05, 0.95);
    const Mat z = 2.0 * rng.normal(4, dim);
    worst = std::max(worst, posterior_mean_routes(spec, z, tau).max_rel_error);
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("posterior mean domain") {
  const auto spec = MixtureSpec::standard_normal(1);
  const Mat z = Mat::Ones(1, 1);
  CHECK_THROWS_AS(posterior_mean(spec, z, 1.0), ContractError);
  CHECK_THROWS_AS(posterior_mean_tweedie(spec, z, 1.0), ContractError);
  CHECK_THROWS_AS(optimal_velocity(spec, z, 1e-3), ContractError);
  CHECK_NOTHROW(posterior_mean_components(spec, z, 1.0));
}

TEST_CASE("optimal velocity and posterior mean are dual") {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const auto spec = random_spec(rng, 2, 3);
    const double tau = rng.uniform(0.01, 0.99);
    const Mat z = rng.normal(5, 2);
    const Mat v = optimal_velocity(spec, z, tau);
    CHECK(max_abs(posterior_mean(spec, z, tau) - (z - tau * v)) < 1e-12);
  }
}

TEST_CASE("optimal velocity limits") {
  const auto spec = MixtureSpec::gaussian(RowVec::Constant(2, 1.5), 0.2);
  // At z = (1 - tau) mu the posterior mean is mu.
  const double tau = 0.3;
  const Mat z = Mat::Constant(1, 2, 0.7 * 1.5);
  const Mat v = optimal_velocity(spec, z, tau);
  CHECK(max_abs(v - (z.array() - 1.5).matrix() / tau) < 1e-12);
  // tau -> 1 on a standard normal: v -> z.
  const auto std_normal = MixtureSpec::standard_normal(2);
  const Mat z2 = Mat::Constant(1, 2, 0.8);
  CHECK(max_abs(optimal_velocity(std_normal, z2, 1.0) - z2) < 1e-12);
}

TEST_CASE("conditioning and fake-spec directions follow the score difference") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const auto full = random_spec(rng, 2, 4, true);
    const auto cond = full.conditional(trial % 2);
    const auto fake = random_spec(rng, 2, 3);
    const double tau = rng.uniform(0.05, 0.95);
    const Mat z = rng.normal(4, 2);
    const double factor = tau * tau / (1 - tau);
    const Mat d_ca = posterior_mean(cond, z, tau) - posterior_mean(full, z, tau);
    CHECK(max_abs(d_ca - factor * (score(cond, z, tau) - score(full, z, tau))) < 1e-9);
    const Mat d_dm = posterior_mean(full, z, tau) - posterior_mean(fake, z, tau);
    CHECK(max_abs(d_dm - factor * (score(full, z, tau) - score(fake, z, tau))) < 1e-9);
  }
}

TEST_CASE("Monte Carlo posterior agrees with the closed form") {
  Rng rng(8);
  int outside = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto spec = random_spec(rng, 2, 3);
    const double tau = rng.uniform(0.3, 0.9);
    // z drawn from the noised marginal, where the importance weights are well behaved.
    const RowVec z = (1 - tau) * spec.sample(1, rng) + tau * rng.normal(1, 2);
    const auto mc = posterior_mean_monte_carlo(spec, z, tau, 20000, rng);
    const Mat exact = posterior_mean(spec, z, tau);
    for (int j = 0; j < 2; ++j) outside += std::abs(mc.mean(j) - exact(0, j)) > 5 * mc.std_error(j) ? 1 : 0;
    CHECK(mc.effective_samples > 100.0);
  }
  CHECK(outside == 0);
}

TEST_CASE("mixture field branches") {
  const auto spec = MixtureSpec::ring(8, 2.0, 0.05, 2);
  const MixtureField field(spec);
  CHECK(field.null_condition() == 2);
  CHECK(field.branch(0).num_components() == 4);
  CHECK(field.branch(2).num_components() == 8);
  Rng rng(9);
  const Mat z = rng.normal(3, 2);
  const std::vector<int> c{0, 1, 2};
  const Mat v = field.velocity(z, flow::time_column(3, 0.5), c);
  for (int i = 0; i < 3; ++i)
    CHECK(max_abs(v.row(i) - optimal_velocity(field.branch(c[static_cast<std::size_t>(i)]), z.row(i), 0.5)) < 1e-14);
}

TEST_CASE("mixture spec validation and sampling") {
  MixtureSpec bad;
  bad.dim = 1;
  bad.weights = {0.5, 0.6};
  bad.means = Mat::Zero(2, 1);
  bad.variances = {1.0, 1.0};
  CHECK_THROWS_AS(bad.validate(), ContractError);
  bad.weights = {0.5, 0.5};
  bad.variances = {1.0, 0.0};
  CHECK_THROWS_AS(bad.validate(), ContractError);

  const auto ring = MixtureSpec::ring(8, 2.0, 0.01, 2);
  Rng rng(10);
  std::vector<int> classes;
  const Mat x = ring.sample(4000, rng, &classes);
  CHECK(x.rows() == 4000);
  const double mean_radius = x.rowwise().norm().mean();
  CHECK(std::abs(mean_radius - 2.0) < 0.02);
  // Class-conditional draws land on their own components.
  const std::vector<int> want(500, 1);
  const Mat y = ring.sample(want, rng);
  for (int i = 0; i < 500; ++i) {
    const double angle = std::atan2(y(i, 1), y(i, 0));
    const int slot = static_cast<int>(std::lround(angle / (std::numbers::pi / 4) + 8)) % 8;
    CHECK(slot % 2 == 1);
  }
}

TEST_CASE("spec files") {
  const std::string text =
      "dim = 2\n"
      "[component]\nweight = 0.25\nmean = 1.0, -1.0\nvariance = 0.05\nlabel = 0\n"
      "[component]\nweight = 0.75\nmean = 0, 2\nvariance = 0.5\nlabel = 1\n";
  const auto spec = parse_mixture_spec(text, "t.spec");
  CHECK(spec.num_components() == 2);
  CHECK(spec.means(0, 1) == -1.0);
  CHECK(spec.labels == std::vector<int>{0, 1});
  const auto again = parse_mixture_spec(format_mixture_spec(spec), "round.spec");
  CHECK(again.means == spec.means);
  CHECK(again.weights == spec.weights);
  CHECK(again.variances == spec.variances);

  const auto ring = parse_mixture_spec("ring = 8, 2.0, 0.01, 2\n", "r.spec");
  CHECK(ring.num_components() == 8);
  CHECK(ring.num_classes() == 2);

  try {
    parse_mixture_spec("dim = 2\n[component]\nweight = 1\nmean = 1, 2, 3\nvariance = 1\n", "bad.spec");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 4);
    CHECK(e.path() == "bad.spec");
  }
  CHECK_THROWS_AS(parse_mixture_spec("dim = 1\n[component]\nweight = 1\nmean = 0\nvariance = -1\n", "v.spec"),
                  ParseError);
  CHECK_THROWS_AS(parse_mixture_spec("dim = 1\n[component]\nwieght = 1\n", "k.spec"), ParseError);
}

TEST_CASE("Gaussian flow transport and derivatives") {
  const GaussianFlow flow(RowVec::Constant(2, 0.5), 0.3);
  Rng rng(11);
  const Mat z = rng.normal(6, 2);
  // Transport composes and inverts.
  const Mat mid = flow.transport(z, 0.9, 0.5);
  CHECK(max_abs(flow.transport(mid, 0.5, 0.2) - flow.transport(z, 0.9, 0.2)) < 1e-12);
  CHECK(max_abs(flow.transport(mid, 0.5, 0.9) - z) < 1e-12);
  // Velocity is the time derivative of transport (central difference).
  const double h = 1e-5;
  const Mat fd = (flow.transport(z, 0.6, 0.6 + h) - flow.transport(z, 0.6, 0.6 - h)) / (2 * h);
  CHECK(max_abs(fd - flow.velocity(z, 0.6)) < 1e-8);
  // Material derivative is the time derivative of velocity along the flow.
  const Mat fd2 = (flow.velocity(flow.transport(z, 0.6, 0.6 + h), 0.6 + h) -
                   flow.velocity(flow.transport(z, 0.6, 0.6 - h), 0.6 - h)) /
                  (2 * h);
  CHECK(max_abs(fd2 - flow.material_derivative(z, 0.6)) < 1e-6);
  // Agrees with the mixture oracle's optimal velocity.
  const auto spec = MixtureSpec::gaussian(RowVec::Constant(2, 0.5), 0.3);
  CHECK(max_abs(flow.velocity(z, 0.6) - optimal_velocity(spec, z, 0.6)) < 1e-12);
}

TEST_CASE("material derivative probe") {
  const std::vector<int> c(4, 0);
  Rng rng(12);
  const Mat z = rng.normal(4, 2);
  SUBCASE("constant field") {
    const AffineField field(RowVec::Constant(2, 3.0), RowVec::Zero(2));
    CHECK(max_abs(material_derivative(field, z, 0.5, c)) == 0.0);
  }
  SUBCASE("tau k field") {
    RowVec k(2);
    k << 1.5, -0.5;
    const AffineField field(RowVec::Zero(2), k);
    const Mat m = material_derivative(field, z, 0.5, c, 1e-3);
    for (int i = 0; i < 4; ++i) CHECK((m.row(i) + k).cwiseAbs().maxCoeff() < 1e-9);
  }
  SUBCASE("Gaussian field converges at first order") {
    const GaussianFlow flow(RowVec::Zero(2), 0.3);
    const auto spec = MixtureSpec::gaussian(RowVec::Zero(2), 0.3);
    const MixtureField field(spec);
    const Mat exact = -flow.material_derivative(z, 0.5);
    const double e1 = max_abs(material_derivative(field, z, 0.5, c, 1e-2) - exact);
    const double e2 = max_abs(material_derivative(field, z, 0.5, c, 1e-3) - exact);
    CHECK(e2 < 0.2 * e1);
    CHECK(e2 < 1e-2);
  }
  SUBCASE("probe below the floor") {
    const AffineField field(RowVec::Zero(2), RowVec::Zero(2));
    CHECK_THROWS_AS(material_derivative(field, z, 0.0015, c, 1e-3), ContractError);
  }
}
