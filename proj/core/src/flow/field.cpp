#include "cdm/flow/field.hpp"

#include <string>

#include "cdm/error.hpp"

namespace cdm::flow {

Mat time_column(Eigen::Index rows, double t) { return Mat::Constant(rows, 1, t); }

void check_times(const Mat& t, double floor, const char* op) {
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    const double v = t.data()[i];
    if (!(v > floor && v <= 1.0))
      throw ContractError(std::string(op) + ": time " + std::to_string(v) + " outside (" +
                          std::to_string(floor) + ", 1]");
  }
}

Mat VelocityField::velocity(const Mat& x, const Mat& t, std::span<const int> c) const {
  ad::NoGradGuard guard;
  return velocity(ad::Tensor::constant(x), t, c).value();
}

Mat interpolate(const Mat& x0, const Mat& eps, double tau) {
  return interpolate(x0, eps, time_column(x0.rows(), tau));
}

Mat interpolate(const Mat& x0, const Mat& eps, const Mat& tau) {
  if (x0.rows() != eps.rows() || x0.cols() != eps.cols())
    throw DimensionError("interpolate: clean sample and noise shapes differ");
  if (tau.rows() != x0.rows() || tau.cols() != 1) throw DimensionError("interpolate: tau must be (B x 1)");
  Mat z(x0.rows(), x0.cols());
  for (Eigen::Index i = 0; i < x0.rows(); ++i) {
    const double s = tau(i, 0);
    if (!(s >= 0.0 && s <= 1.0)) throw ContractError("interpolate: tau " + std::to_string(s) + " outside [0, 1]");
    z.row(i) = (1.0 - s) * x0.row(i) + s * eps.row(i);
  }
  return z;
}

ad::Tensor data_prediction(const VelocityField& field, const ad::Tensor& x, const Mat& t,
                           std::span<const int> c, double floor) {
  check_times(t, floor, "data_prediction");
  const ad::Tensor v = field.velocity(x, t, c);
  return ad::sub(x, ad::mul_col(v, ad::Tensor::constant(t)));
}

Mat data_prediction(const VelocityField& field, const Mat& x, const Mat& t, std::span<const int> c,
                    double floor) {
  ad::NoGradGuard guard;
  return data_prediction(field, ad::Tensor::constant(x), t, c, floor).value();
}

Mat guided_velocity(const VelocityField& field, const Mat& x, const Mat& t, std::span<const int> c,
                    const GuidanceConfig& guidance) {
  if (guidance.alpha < 0.0) throw ContractError("guided_velocity: guidance scale must be >= 0");
  const int null_token = guidance.null_token >= 0 ? guidance.null_token : field.null_condition();
  std::vector<int> null_c(c.size(), null_token);
  if (guidance.alpha == 1.0) return field.velocity(x, t, c);
  if (guidance.alpha == 0.0) return field.velocity(x, t, null_c);
  const Mat vc = field.velocity(x, t, c);
  const Mat vu = field.velocity(x, t, null_c);
  return vu + guidance.alpha * (vc - vu);
}

ad::Tensor flow_matching_loss(const VelocityField& field, const Mat& x0, const Mat& tau, const Mat& eps,
                              std::span<const int> c) {
  const Mat z = interpolate(x0, eps, tau);
  const ad::Tensor v = field.velocity(ad::Tensor::constant(z), tau, c);
  const ad::Tensor residual = ad::sub(v, ad::Tensor::constant(eps - x0));
  return ad::scale(ad::sum(ad::square(residual)), 1.0 / static_cast<double>(x0.rows()));
}

}  // namespace cdm::flow
