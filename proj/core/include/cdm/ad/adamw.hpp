#pragma once

#include <vector>

#include "cdm/ad/tensor.hpp"

namespace cdm::ad {

struct AdamWConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 1e-3;
  double eps = 1e-8;
};

// AdamW with bias correction and decoupled weight decay. Moment buffers are
// created on the first step to match the parameter shapes.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  // Updates every parameter in place from its accumulated gradient (missing
  // gradients count as zero) and then clears the gradients. Throws
  // TrainingError before touching anything if a gradient is not finite.
  void step(std::vector<Tensor>& params);

  long steps() const { return t_; }
  const AdamWConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }
  const std::vector<Mat>& first_moments() const { return m_; }
  const std::vector<Mat>& second_moments() const { return v_; }

 private:
  AdamWConfig config_;
  long t_ = 0;
  std::vector<Mat> m_;
  std::vector<Mat> v_;
};

}  // namespace cdm::ad
