#pragma once

#include <span>
#include <vector>

#include "cdm/ad/tensor.hpp"
#include "cdm/matrix.hpp"

namespace cdm::flow {

// All times live in (time_floor, 1]. Data prediction and the score
// prefactors degenerate at the endpoints.
inline constexpr double kDefaultTimeFloor = 1e-3;

// Guidance scale used for teacher sampling unless configured otherwise.
inline constexpr double kTeacherGuidanceScale = 7.0;

// (B x 1) column holding the same time for every row.
Mat time_column(Eigen::Index rows, double t);

// Throws ContractError unless every entry of t lies in (floor, 1].
void check_times(const Mat& t, double floor, const char* op);

// A conditional, time-dependent velocity field v(x, t, c). Conditions are
// integer tokens; null_condition() selects the unconditional branch.
class VelocityField {
 public:
  virtual ~VelocityField() = default;

  virtual int dim() const = 0;
  virtual int null_condition() const = 0;

  // x: (B x d), t: (B x 1), c: B tokens. Fields without parameters return a
  // constant tensor.
  virtual ad::Tensor velocity(const ad::Tensor& x, const Mat& t, std::span<const int> c) const = 0;

  // Plain evaluation without recording a graph.
  Mat velocity(const Mat& x, const Mat& t, std::span<const int> c) const;
};

// z = (1 - tau) x0 + tau eps, per row. tau must lie in [0, 1].
Mat interpolate(const Mat& x0, const Mat& eps, double tau);
Mat interpolate(const Mat& x0, const Mat& eps, const Mat& tau);

// x - t * v(x, t, c), differentiable through the field. t must lie in
// (floor, 1].
ad::Tensor data_prediction(const VelocityField& field, const ad::Tensor& x, const Mat& t,
                           std::span<const int> c, double floor = kDefaultTimeFloor);
Mat data_prediction(const VelocityField& field, const Mat& x, const Mat& t, std::span<const int> c,
                    double floor = kDefaultTimeFloor);

struct GuidanceConfig {
  double alpha = 1.0;     // 1 = plain conditional branch, 0 = unconditional
  int null_token = -1;    // < 0 means the field's own null condition
};

// v_uncond + alpha (v_cond - v_uncond). alpha = 1 and alpha = 0 return the
// respective branch bit for bit.
Mat guided_velocity(const VelocityField& field, const Mat& x, const Mat& t, std::span<const int> c,
                    const GuidanceConfig& guidance);

// Flow-matching regression loss: mean over rows of ||v(z, tau, c) - (eps - x0)||^2
// with z = (1 - tau) x0 + tau eps. x0 and eps are treated as constants.
ad::Tensor flow_matching_loss(const VelocityField& field, const Mat& x0, const Mat& tau, const Mat& eps,
                              std::span<const int> c);

}  // namespace cdm::flow
