#pragma once

#include <string_view>
#include <vector>

#include "cdm/ad/tensor.hpp"
#include "cdm/rng.hpp"

namespace cdm::ad {

enum class Activation { silu, tanh };

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation a);

struct MlpShape {
  int in = 0;
  int out = 0;
  int hidden = 64;
  int depth = 3;  // number of hidden layers
  Activation activation = Activation::silu;
};

// Fully connected network: depth hidden layers of equal width, linear head.
class Mlp {
 public:
  Mlp() = default;
  Mlp(const MlpShape& shape, Rng& rng);

  Tensor forward(const Tensor& x) const;

  const MlpShape& shape() const { return shape_; }
  // Weights and biases interleaved, input layer first.
  std::vector<Tensor> parameters() const;
  // Deep copy of all parameter values into fresh leaves.
  Mlp clone() const;

 private:
  MlpShape shape_;
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
};

}  // namespace cdm::ad
