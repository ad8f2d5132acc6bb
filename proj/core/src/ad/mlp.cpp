#include "cdm/ad/mlp.hpp"

#include <cmath>
#include <string>

#include "cdm/error.hpp"

namespace cdm::ad {

Activation parse_activation(std::string_view name) {
  if (name == "silu") return Activation::silu;
  if (name == "tanh") return Activation::tanh;
  throw ContractError("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(Activation a) { return a == Activation::silu ? "silu" : "tanh"; }

Mlp::Mlp(const MlpShape& shape, Rng& rng) : shape_(shape) {
  if (shape.in < 1 || shape.out < 1 || shape.hidden < 1 || shape.depth < 1)
    throw ContractError("Mlp: all layer sizes must be positive");
  int fan_in = shape.in;
  for (int layer = 0; layer <= shape.depth; ++layer) {
    const int fan_out = layer == shape.depth ? shape.out : shape.hidden;
    // Uniform Glorot init.
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    Mat w(fan_in, fan_out);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-limit, limit);
    weights_.push_back(Tensor::parameter(std::move(w)));
    biases_.push_back(Tensor::parameter(Mat::Zero(1, fan_out)));
    fan_in = fan_out;
  }
}

Tensor Mlp::forward(const Tensor& x) const {
  if (x.cols() != shape_.in)
    throw DimensionError("Mlp::forward: expected " + std::to_string(shape_.in) + " input features, got " +
                         std::to_string(x.cols()));
  Tensor h = x;
  for (std::size_t layer = 0; layer < weights_.size(); ++layer) {
    h = add_row(matmul(h, weights_[layer]), biases_[layer]);
    if (layer + 1 < weights_.size()) h = shape_.activation == Activation::silu ? silu(h) : tanh(h);
  }
  return h;
}

std::vector<Tensor> Mlp::parameters() const {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    out.push_back(weights_[i]);
    out.push_back(biases_[i]);
  }
  return out;
}

Mlp Mlp::clone() const {
  Mlp copy;
  copy.shape_ = shape_;
  for (const auto& w : weights_) copy.weights_.push_back(Tensor::parameter(w.value()));
  for (const auto& b : biases_) copy.biases_.push_back(Tensor::parameter(b.value()));
  return copy;
}

}  // namespace cdm::ad
