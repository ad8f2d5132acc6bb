#include "cdm/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cdm/error.hpp"
#include "cdm/rng.hpp"

namespace cdm::eval {
namespace {

void check_pair(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() == 0 || b.rows() == 0) throw ContractError(std::string(op) + ": empty sample set");
  if (a.cols() != b.cols())
    throw DimensionError(std::string(op) + ": dimension " + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.cols()));
}

// Row i of the result: mean_j ||x_i - y_j||.
Vec mean_distances(const Mat& x, const Mat& y) {
  Vec out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < y.rows(); ++j) s += (x.row(i) - y.row(j)).norm();
    out(i) = s / static_cast<double>(y.rows());
  }
  return out;
}

double variance(const Vec& v) {
  if (v.size() < 2) return 0.0;
  const double m = v.mean();
  return (v.array() - m).square().sum() / static_cast<double>(v.size() - 1);
}

}  // namespace

Estimate energy_distance(const Mat& a, const Mat& b) {
  check_pair(a, b, "energy_distance");
  const Vec ab = mean_distances(a, b);
  const Vec aa = mean_distances(a, a);
  const Vec bb = mean_distances(b, b);
  const Vec ba = mean_distances(b, a);
  Estimate e;
  e.value = std::max(0.0, 2.0 * ab.mean() - aa.mean() - bb.mean());
  const Vec ga = 2.0 * ab - 2.0 * aa;
  const Vec gb = 2.0 * ba - 2.0 * bb;
  e.std_error = std::sqrt(variance(ga) / static_cast<double>(a.rows()) + variance(gb) / static_cast<double>(b.rows()));
  return e;
}

double gaussian_energy_distance_1d(double mu_a, double s_a, double mu_b, double s_b) {
  // E|N(m, s^2)| = s sqrt(2/pi) exp(-m^2 / 2s^2) + m (1 - 2 Phi(-m/s)).
  auto abs_mean = [](double m, double s) {
    const double phi = 0.5 * std::erfc(m / (s * std::numbers::sqrt2));
    return s * std::sqrt(2.0 / std::numbers::pi) * std::exp(-m * m / (2.0 * s * s)) + m * (1.0 - 2.0 * phi);
  };
  const double cross = abs_mean(mu_a - mu_b, std::hypot(s_a, s_b));
  const double within_a = abs_mean(0.0, std::numbers::sqrt2 * s_a);
  const double within_b = abs_mean(0.0, std::numbers::sqrt2 * s_b);
  return 2.0 * cross - within_a - within_b;
}

double wasserstein2_squared_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw ContractError("wasserstein2_squared_1d: empty sample set");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  if (a.size() == b.size()) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s / na;
  }
  // Walk the merged quantile breakpoints k/na and l/nb.
  double s = 0.0;
  double u = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const double next_a = static_cast<double>(i + 1) / na;
    const double next_b = static_cast<double>(j + 1) / nb;
    const double next = std::min(next_a, next_b);
    s += (next - u) * (a[i] - b[j]) * (a[i] - b[j]);
    u = next;
    if (next_a <= next) ++i;
    if (next_b <= next) ++j;
  }
  return s;
}

double sliced_wasserstein2(const Mat& a, const Mat& b, int n_projections, std::uint64_t seed) {
  check_pair(a, b, "sliced_wasserstein2");
  if (n_projections < 1) throw ContractError("sliced_wasserstein2: need at least one projection");
  Rng rng(seed);
  double total = 0.0;
  std::vector<double> pa(static_cast<std::size_t>(a.rows()));
  std::vector<double> pb(static_cast<std::size_t>(b.rows()));
  for (int p = 0; p < n_projections; ++p) {
    RowVec dir = rng.normal(1, a.cols());
    const double norm = dir.norm();
    if (norm == 0.0) {
      --p;
      continue;
    }
    dir /= norm;
    for (Eigen::Index i = 0; i < a.rows(); ++i) pa[static_cast<std::size_t>(i)] = a.row(i).dot(dir);
    for (Eigen::Index i = 0; i < b.rows(); ++i) pb[static_cast<std::size_t>(i)] = b.row(i).dot(dir);
    total += wasserstein2_squared_1d(pa, pb);
  }
  return std::sqrt(total / n_projections);
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ContractError("quantile: empty input");
  if (!(q >= 0.0 && q <= 1.0)) throw ContractError("quantile: q outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

double sign_test_p(int successes, int trials) {
  if (trials < 0 || successes < 0 || successes > trials) throw ContractError("sign_test_p: bad counts");
  double p = 0.0;
  for (int k = successes; k <= trials; ++k) {
    p += std::exp(std::lgamma(trials + 1.0) - std::lgamma(k + 1.0) - std::lgamma(trials - k + 1.0) -
                  trials * std::numbers::ln2);
  }
  return std::min(1.0, p);
}

double log_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ContractError("log_log_slope: need two or more paired points");
  double mx = 0.0, my = 0.0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw ContractError("log_log_slope: values must be positive");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace cdm::eval
