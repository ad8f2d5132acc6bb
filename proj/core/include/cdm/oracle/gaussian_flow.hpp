#pragma once

#include <span>

#include "cdm/flow/field.hpp"
#include "cdm/matrix.hpp"

namespace cdm::oracle {

inline constexpr double kDefaultProbeStep = 1e-3;

// [v(z - h v, tau - h, c) - v(z, tau, c)] / h for every row: a one-step
// finite difference of the velocity along the backward trajectory. For small
// h this approaches -(d_tau v + J_z v v). Throws ContractError when
// tau - h <= floor.
Mat material_derivative(const flow::VelocityField& field, const Mat& z, double tau, std::span<const int> c,
                        double h = kDefaultProbeStep, double floor = flow::kDefaultTimeFloor);

// Exact probability-flow ODE for data N(mu, sigma^2 I). Along a trajectory
// u = (z - (1 - tau) mu) / s(tau) is conserved, with
// s(tau)^2 = (1 - tau)^2 sigma^2 + tau^2.
class GaussianFlow {
 public:
  GaussianFlow(RowVec mean, double variance);

  int dim() const { return static_cast<int>(mean_.size()); }
  const RowVec& mean() const { return mean_; }
  double variance() const { return variance_; }

  double s(double tau) const;
  double ds(double tau) const;
  double d2s(double tau) const;

  // Transports z from time `from` to time `to` exactly.
  Mat transport(const Mat& z, double from, double to) const;
  Mat velocity(const Mat& z, double tau) const;
  // Total derivative dv/dtau = d_tau v + J_z v v along the flow.
  Mat material_derivative(const Mat& z, double tau) const;

 private:
  RowVec mean_;
  double variance_;
};

// Velocity field v(z, tau) = a + b tau, independent of the condition.
class AffineField final : public flow::VelocityField {
 public:
  AffineField(RowVec a, RowVec b, double floor = flow::kDefaultTimeFloor);
  int dim() const override { return static_cast<int>(a_.size()); }
  int null_condition() const override { return 0; }
  using VelocityField::velocity;
  ad::Tensor velocity(const ad::Tensor& x, const Mat& t, std::span<const int> c) const override;

 private:
  RowVec a_, b_;
  double floor_;
};

}  // namespace cdm::oracle
