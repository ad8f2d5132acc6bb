#pragma once

#include <cstdint>
#include <vector>

#include "cdm/ad/mlp.hpp"
#include "cdm/flow/field.hpp"

namespace cdm::flow {

struct ModelConfig {
  int dim = 2;
  int num_classes = 1;  // the null token is num_classes
  int hidden = 64;
  int depth = 3;
  ad::Activation activation = ad::Activation::silu;
  int time_features = 32;  // sin/cos pairs at geometric frequencies
  int cond_features = 16;
};

// [sin(w_k t), cos(w_k t)] for k < features / 2, w_k geometric in [1, 32].
Mat time_embedding(const Mat& t, int features);

// v(x, t, c) = MLP([x, time_embedding(t), E[c]]), with E a learned table
// holding one row per class plus the null row.
class VelocityModel : public VelocityField {
 public:
  VelocityModel(const ModelConfig& config, Rng& rng);
  VelocityModel(VelocityModel&&) = default;
  VelocityModel& operator=(VelocityModel&&) = default;
  VelocityModel(const VelocityModel&) = delete;
  VelocityModel& operator=(const VelocityModel&) = delete;

  int dim() const override { return config_.dim; }
  int null_condition() const override { return config_.num_classes; }
  using VelocityField::velocity;
  ad::Tensor velocity(const ad::Tensor& x, const Mat& t, std::span<const int> c) const override;

  const ModelConfig& config() const { return config_; }
  // Declaration order: condition table, then MLP weights/biases by layer.
  std::vector<ad::Tensor> parameters() const;
  std::size_t parameter_count() const;
  VelocityModel clone() const;
  // Overwrites values from another model of identical shape.
  void copy_from(const VelocityModel& other);
  // FNV-1a over the raw parameter bytes.
  std::uint64_t checksum() const;
  void zero_grad();

 private:
  VelocityModel() = default;
  ModelConfig config_;
  ad::Tensor cond_table_;
  ad::Mlp backbone_;
};

}  // namespace cdm::flow
