#include "cdm/flow/checkpoint.hpp"

#include <bit>
#include <algorithm>
#include <cstring>

#include "cdm/error.hpp"
#include "cdm/io/atomic_file.hpp"

namespace cdm::flow {
namespace {

constexpr char kMagic[8] = {'C', 'D', 'M', 'F', 'L', 'O', 'W', '\0'};

template <typename T>
void put(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& source) : bytes_(bytes), source_(source) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw IoError(source_ + ": truncated checkpoint");
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, raw, sizeof(T));
    return value;
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  const std::string& source_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const VelocityModel& model) {
  const ModelConfig& c = model.config();
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.dim));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.num_classes));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.hidden));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.depth));
  put<std::uint32_t>(out, c.activation == ad::Activation::silu ? 0u : 1u);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.time_features));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.cond_features));
  put<std::uint64_t>(out, model.parameter_count());
  for (const auto& p : model.parameters())
    for (Eigen::Index i = 0; i < p.value().size(); ++i) put<double>(out, p.value().data()[i]);
  return out;
}

VelocityModel decode_checkpoint(const std::string& bytes, const std::string& source) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw IoError(source + ": not a velocity-model checkpoint (bad magic)");
  Reader r(bytes, source);
  for (std::size_t i = 0; i < sizeof(kMagic); ++i) r.get<char>();
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw IoError(source + ": unsupported checkpoint version " + std::to_string(version));
  ModelConfig c;
  c.dim = static_cast<int>(r.get<std::uint32_t>());
  c.num_classes = static_cast<int>(r.get<std::uint32_t>());
  c.hidden = static_cast<int>(r.get<std::uint32_t>());
  c.depth = static_cast<int>(r.get<std::uint32_t>());
  const auto act = r.get<std::uint32_t>();
  if (act > 1) throw IoError(source + ": unknown activation tag " + std::to_string(act));
  c.activation = act == 0 ? ad::Activation::silu : ad::Activation::tanh;
  c.time_features = static_cast<int>(r.get<std::uint32_t>());
  c.cond_features = static_cast<int>(r.get<std::uint32_t>());
  const auto count = r.get<std::uint64_t>();

  Rng scratch(0);
  VelocityModel model(c, scratch);
  if (count != model.parameter_count())
    throw IoError(source + ": parameter count " + std::to_string(count) + " does not match header shape");
  for (auto& p : model.parameters()) {
    Mat& v = p.mutable_value();
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = r.get<double>();
  }
  if (!r.at_end()) throw IoError(source + ": trailing bytes after parameters");
  return model;
}

void save_checkpoint(const VelocityModel& model, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_checkpoint(model));
}

VelocityModel load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path), path.string());
}

}  // namespace cdm::flow
