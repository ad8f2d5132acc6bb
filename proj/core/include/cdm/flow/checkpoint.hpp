#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "cdm/flow/velocity_model.hpp"

namespace cdm::flow {

// Binary layout, all integers and floats little-endian:
//   char[8]  magic "CDMFLOW\0"
//   u32      format version (kCheckpointVersion)
//   u32 x 7  dim, num_classes, hidden, depth, activation (0 silu, 1 tanh),
//            time_features, cond_features
//   u64      number of f64 values that follow
//   f64[]    parameters in VelocityModel::parameters() order, row-major
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const VelocityModel& model);
VelocityModel decode_checkpoint(const std::string& bytes, const std::string& source = "<memory>");

void save_checkpoint(const VelocityModel& model, const std::filesystem::path& path);
// Throws IoError for unreadable files and on bad magic, unknown version or
// truncated payload.
VelocityModel load_checkpoint(const std::filesystem::path& path);

}  // namespace cdm::flow
