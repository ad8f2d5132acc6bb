#include "cdm/flow/velocity_model.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <string>

#include "cdm/error.hpp"
#include "cdm/io/fingerprint.hpp"

namespace cdm::flow {

Mat time_embedding(const Mat& t, int features) {
  const int half = features / 2;
  Mat out(t.rows(), 2 * half);
  for (int k = 0; k < half; ++k) {
    const double w = half > 1 ? std::pow(32.0, static_cast<double>(k) / (half - 1)) : 1.0;
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
      out(i, 2 * k) = std::sin(w * t(i, 0));
      out(i, 2 * k + 1) = std::cos(w * t(i, 0));
    }
  }
  return out;
}

VelocityModel::VelocityModel(const ModelConfig& config, Rng& rng) : config_(config) {
  if (config.dim < 1 || config.num_classes < 1 || config.time_features < 2 || config.cond_features < 1)
    throw ContractError("VelocityModel: invalid configuration");
  cond_table_ = ad::Tensor::parameter(rng.normal(config.num_classes + 1, config.cond_features));
  ad::MlpShape shape;
  shape.in = config.dim + 2 * (config.time_features / 2) + config.cond_features;
  shape.out = config.dim;
  shape.hidden = config.hidden;
  shape.depth = config.depth;
  shape.activation = config.activation;
  backbone_ = ad::Mlp(shape, rng);
}

ad::Tensor VelocityModel::velocity(const ad::Tensor& x, const Mat& t, std::span<const int> c) const {
  if (x.cols() != config_.dim)
    throw DimensionError("VelocityModel::velocity: expected dimension " + std::to_string(config_.dim) + ", got " +
                         std::to_string(x.cols()));
  if (t.rows() != x.rows() || t.cols() != 1 || static_cast<Eigen::Index>(c.size()) != x.rows())
    throw DimensionError("VelocityModel::velocity: batch sizes of x, t and c differ");
  const std::array<ad::Tensor, 3> parts = {x, ad::Tensor::constant(time_embedding(t, config_.time_features)),
                                           ad::gather_rows(cond_table_, c)};
  return backbone_.forward(ad::concat_cols(parts));
}

std::vector<ad::Tensor> VelocityModel::parameters() const {
  std::vector<ad::Tensor> out{cond_table_};
  for (auto& p : backbone_.parameters()) out.push_back(p);
  return out;
}

std::size_t VelocityModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += static_cast<std::size_t>(p.value().size());
  return n;
}

VelocityModel VelocityModel::clone() const {
  VelocityModel copy;
  copy.config_ = config_;
  copy.cond_table_ = ad::Tensor::parameter(cond_table_.value());
  copy.backbone_ = backbone_.clone();
  return copy;
}

void VelocityModel::copy_from(const VelocityModel& other) {
  auto dst = parameters();
  const auto src = other.parameters();
  if (dst.size() != src.size()) throw ContractError("VelocityModel::copy_from: architecture mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].rows() != src[i].rows() || dst[i].cols() != src[i].cols())
      throw ContractError("VelocityModel::copy_from: architecture mismatch");
    dst[i].mutable_value() = src[i].value();
  }
}

std::uint64_t VelocityModel::checksum() const {
  std::uint64_t h = io::kFnvOffset;
  for (const auto& p : parameters())
    h = io::fnv1a(p.value().data(), static_cast<std::size_t>(p.value().size()) * sizeof(double), h);
  return h;
}

void VelocityModel::zero_grad() {
  for (auto& p : parameters()) p.zero_grad();
}

}  // namespace cdm::flow
