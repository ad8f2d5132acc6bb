#include "cdm/distill/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "cdm/error.hpp"

namespace cdm::distill {
namespace {

// (1 - tau_i) source_i + tau_i eps_i per row.
Mat renoise(const Mat& source, const Mat& eps, const Mat& tau) {
  if (source.rows() != eps.rows() || source.cols() != eps.cols() || tau.rows() != source.rows() || tau.cols() != 1)
    throw DimensionError("renoise: shapes of source, eps and tau disagree");
  return flow::interpolate(source, eps, tau);
}

TermResult finish(const ad::Tensor& pred, const Mat& direction, const Vec& w, int clamped) {
  // target = sg[pred + w * direction]; the residual pred - target has value
  // -w * direction and gradient identity with respect to pred.
  Mat target = pred.value();
  for (Eigen::Index i = 0; i < target.rows(); ++i) target.row(i) += w(i) * direction.row(i);
  const ad::Tensor residual = ad::sub(pred, ad::Tensor::constant(std::move(target)));
  const ad::Tensor loss =
      ad::scale(ad::sum(ad::square(residual)), 0.5 / static_cast<double>(pred.rows()));
  return TermResult{loss, w, clamped};
}

int count_clamped(const Vec& w, const WeightClamp& clamp) {
  int n = 0;
  for (Eigen::Index i = 0; i < w.size(); ++i) n += (w(i) <= clamp.min || w(i) >= clamp.max) ? 1 : 0;
  return n;
}

// Teacher predictions are evaluated with the graph enabled and then cut, so
// a missing stop-gradient would show up as teacher parameter gradients.
Mat teacher_prediction(const flow::VelocityField& field, const Mat& z, const Mat& tau, std::span<const int> c,
                       double floor) {
  const ad::Tensor pred = flow::data_prediction(field, ad::Tensor::constant(z), tau, c, floor);
  return ad::detach(pred).value();
}

}  // namespace

Vec weight_factor(const Mat& teacher_pred, const Mat& student_pred, const WeightClamp& clamp) {
  if (teacher_pred.rows() != student_pred.rows() || teacher_pred.cols() != student_pred.cols())
    throw DimensionError("weight_factor: prediction shapes differ");
  Vec w(teacher_pred.rows());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double mad = (teacher_pred.row(i) - student_pred.row(i)).cwiseAbs().mean();
    const double raw = mad > 0.0 ? 1.0 / mad : clamp.max;
    w(i) = std::isfinite(raw) ? std::clamp(raw, clamp.min, clamp.max) : clamp.max;
  }
  return w;
}

TermResult ca_loss(const flow::VelocityField& real, const ad::Tensor& x_hat0, const Mat& tau, const Mat& eps,
                   std::span<const int> c, double alpha, const WeightClamp& clamp, double floor) {
  if (!(alpha >= 0.0)) throw ContractError("ca_loss: alpha must be >= 0");
  const Mat z = renoise(x_hat0.value(), eps, tau);
  const std::vector<int> null(c.size(), real.null_condition());
  const Mat cond = teacher_prediction(real, z, tau, c, floor);
  const Mat uncond = teacher_prediction(real, z, tau, null, floor);
  const Vec w = weight_factor(cond, x_hat0.value(), clamp);
  return finish(x_hat0, alpha * (cond - uncond), w, count_clamped(w, clamp));
}

TermResult matching_loss(const flow::VelocityField& real, const flow::VelocityField& fake, const ad::Tensor& pred,
                         const Mat& source, const Mat& tau, const Mat& eps, std::span<const int> c,
                         const WeightClamp& clamp, double floor) {
  const Mat z = renoise(source, eps, tau);
  const Mat d_real = teacher_prediction(real, z, tau, c, floor);
  const Mat d_fake = teacher_prediction(fake, z, tau, c, floor);
  const Vec w = weight_factor(d_real, pred.value(), clamp);
  return finish(pred, d_real - d_fake, w, count_clamped(w, clamp));
}

TermResult dm_loss(const flow::VelocityField& real, const flow::VelocityField& fake, const ad::Tensor& x_hat0,
                   const Mat& tau, const Mat& eps, std::span<const int> c, const WeightClamp& clamp, double floor) {
  return matching_loss(real, fake, x_hat0, x_hat0.value(), tau, eps, c, clamp, floor);
}

CdmResult cdm_loss(const flow::VelocityField& student, const flow::VelocityField& real,
                   const flow::VelocityField& fake, const CdmInputs& in, std::span<const int> c,
                   const CdmOptions& options, const WeightClamp& clamp, double floor) {
  const Eigen::Index b = in.x_anchor.rows();
  if (in.t_prime.rows() != b || in.t_prime.cols() != 1) throw DimensionError("cdm_loss: t_prime must be (B x 1)");

  CdmResult out;
  ad::Tensor x_prime;
  switch (options.perturbation) {
    case Perturbation::velocity: {
      out.t_used = in.t_prime;
      const Mat t_anchor = flow::time_column(b, in.t_anchor);
      ad::Tensor v;
      if (options.extrapolation == Extrapolation::detached) {
        ad::NoGradGuard guard;
        v = student.velocity(ad::Tensor::constant(in.x_anchor), t_anchor, c);
      } else {
        v = student.velocity(ad::Tensor::constant(in.x_anchor), t_anchor, c);
      }
      const Mat stride = (in.t_prime.array() - in.t_anchor).matrix();
      x_prime = ad::add(ad::Tensor::constant(in.x_anchor), ad::mul_col(v, ad::Tensor::constant(stride)));
      break;
    }
    case Perturbation::gaussian:
      out.t_used = in.t_prime;
      x_prime = ad::Tensor::constant(renoise(in.x_hat0_anchor, in.eps_perturb, in.t_prime));
      break;
    case Perturbation::none:
      out.t_used = flow::time_column(b, in.t_anchor);
      x_prime = ad::Tensor::constant(in.x_anchor);
      break;
  }
  out.x_prime = x_prime.value();

  const ad::Tensor pred = flow::data_prediction(student, x_prime, out.t_used, c, floor);
  const Mat& source = options.target == CdmTarget::full_trajectory ? in.full_trajectory : pred.value();
  out.term = matching_loss(real, fake, pred, source, in.tau, in.eps, c, clamp, floor);
  return out;
}

Perturbation parse_perturbation(std::string_view s) {
  if (s == "velocity") return Perturbation::velocity;
  if (s == "gaussian") return Perturbation::gaussian;
  if (s == "none") return Perturbation::none;
  throw ContractError("unknown perturbation '" + std::string(s) + "' (velocity|gaussian|none)");
}

std::string_view to_string(Perturbation p) {
  switch (p) {
    case Perturbation::velocity: return "velocity";
    case Perturbation::gaussian: return "gaussian";
    case Perturbation::none: return "none";
  }
  return "?";
}

Extrapolation parse_extrapolation(std::string_view s) {
  if (s == "detached") return Extrapolation::detached;
  if (s == "attached") return Extrapolation::attached;
  throw ContractError("unknown extrapolation '" + std::string(s) + "' (detached|attached)");
}

std::string_view to_string(Extrapolation e) { return e == Extrapolation::detached ? "detached" : "attached"; }

CdmTarget parse_cdm_target(std::string_view s) {
  if (s == "local") return CdmTarget::local;
  if (s == "full_trajectory") return CdmTarget::full_trajectory;
  throw ContractError("unknown cdm target '" + std::string(s) + "' (local|full_trajectory)");
}

std::string_view to_string(CdmTarget t) { return t == CdmTarget::local ? "local" : "full_trajectory"; }

}  // namespace cdm::distill
