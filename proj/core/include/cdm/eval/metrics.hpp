#pragma once

#include <cstdint>
#include <vector>

#include "cdm/matrix.hpp"

namespace cdm::eval {

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
};

// V-statistic 2 E|X - Y| - E|X - X'| - E|Y - Y'| over all pairs (including
// i = j), so the result is >= 0 and exactly 0 for identical sets. The
// standard error comes from the first-order Hoeffding projection.
Estimate energy_distance(const Mat& a, const Mat& b);

// Closed-form energy distance between N(mu_a, s_a^2) and N(mu_b, s_b^2).
double gaussian_energy_distance_1d(double mu_a, double s_a, double mu_b, double s_b);

// Squared 2-Wasserstein distance between two 1-D empirical measures, via the
// quantile coupling. Sizes may differ.
double wasserstein2_squared_1d(std::vector<double> a, std::vector<double> b);

// sqrt of the mean over random unit directions of the projected W2^2.
// Directions come from `seed`, so two calls with one seed share directions.
double sliced_wasserstein2(const Mat& a, const Mat& b, int n_projections, std::uint64_t seed);

double quantile(std::vector<double> values, double q);
double median(std::vector<double> values);

// One-sided sign test: P(X >= successes) for X ~ Binomial(trials, 1/2).
double sign_test_p(int successes, int trials);

// Least-squares slope of log(y) against log(x).
double log_log_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace cdm::eval
