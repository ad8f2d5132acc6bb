#include "cdm/ad/adamw.hpp"

#include <cmath>
#include <string>

#include "cdm/error.hpp"

namespace cdm::ad {

void AdamW::step(std::vector<Tensor>& params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].has_grad() && !params[i].node()->grad.allFinite())
      throw TrainingError("AdamW: non-finite gradient in parameter " + std::to_string(i) +
                          "; training aborted");
  }
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.push_back(Mat::Zero(p.rows(), p.cols()));
      v_.push_back(Mat::Zero(p.rows(), p.cols()));
    }
  }
  if (m_.size() != params.size()) throw ContractError("AdamW: parameter list changed between steps");

  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Mat& p = params[i].mutable_value();
    const Mat g = params[i].grad();
    if (m_[i].rows() != p.rows() || m_[i].cols() != p.cols())
      throw DimensionError("AdamW: moment shape does not match parameter " + std::to_string(i));
    p *= 1.0 - config_.lr * config_.weight_decay;
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g.cwiseAbs2();
    p.array() -= config_.lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + config_.eps);
    params[i].zero_grad();
  }
}

}  // namespace cdm::ad
