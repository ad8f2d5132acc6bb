#include "cdm/oracle/gaussian_flow.hpp"

#include <cmath>
#include <string>

#include "cdm/error.hpp"

namespace cdm::oracle {

Mat material_derivative(const flow::VelocityField& field, const Mat& z, double tau, std::span<const int> c,
                        double h, double floor) {
  if (!(h > 0.0)) throw ContractError("material_derivative: probe step must be positive");
  if (!(tau - h > floor) || !(tau <= 1.0))
    throw ContractError("material_derivative: probe time " + std::to_string(tau - h) + " not above floor " +
                        std::to_string(floor));
  const Mat v = field.velocity(z, flow::time_column(z.rows(), tau), c);
  const Mat probe = z - h * v;
  const Mat v_probe = field.velocity(probe, flow::time_column(z.rows(), tau - h), c);
  return (v_probe - v) / h;
}

GaussianFlow::GaussianFlow(RowVec mean, double variance) : mean_(std::move(mean)), variance_(variance) {
  if (!(variance_ > 0.0)) throw ContractError("GaussianFlow: variance must be positive");
}

double GaussianFlow::s(double tau) const {
  return std::sqrt((1.0 - tau) * (1.0 - tau) * variance_ + tau * tau);
}

double GaussianFlow::ds(double tau) const { return (tau - (1.0 - tau) * variance_) / s(tau); }

double GaussianFlow::d2s(double tau) const {
  const double d = ds(tau);
  return ((1.0 + variance_) - d * d) / s(tau);
}

Mat GaussianFlow::transport(const Mat& z, double from, double to) const {
  Mat out = z;
  const double ratio = s(to) / s(from);
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    out.row(i) = (1.0 - to) * mean_ + ratio * (z.row(i) - (1.0 - from) * mean_);
  return out;
}

Mat GaussianFlow::velocity(const Mat& z, double tau) const {
  Mat out = z;
  const double k = ds(tau) / s(tau);
  for (Eigen::Index i = 0; i < z.rows(); ++i) out.row(i) = -mean_ + k * (z.row(i) - (1.0 - tau) * mean_);
  return out;
}

Mat GaussianFlow::material_derivative(const Mat& z, double tau) const {
  Mat out = z;
  const double k = d2s(tau) / s(tau);
  for (Eigen::Index i = 0; i < z.rows(); ++i) out.row(i) = k * (z.row(i) - (1.0 - tau) * mean_);
  return out;
}

AffineField::AffineField(RowVec a, RowVec b, double floor) : a_(std::move(a)), b_(std::move(b)), floor_(floor) {
  if (a_.size() != b_.size()) throw DimensionError("AffineField: a and b differ in length");
}

ad::Tensor AffineField::velocity(const ad::Tensor& x, const Mat& t, std::span<const int> c) const {
  flow::check_times(t, floor_, "AffineField::velocity");
  if (x.cols() != a_.size() || t.rows() != x.rows() || static_cast<std::size_t>(x.rows()) != c.size())
    throw DimensionError("AffineField::velocity: batch shapes disagree");
  Mat v(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < v.rows(); ++i) v.row(i) = a_ + t(i, 0) * b_;
  return ad::Tensor::constant(std::move(v));
}

}  // namespace cdm::oracle
