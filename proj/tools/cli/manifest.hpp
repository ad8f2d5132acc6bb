#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cdm::cli {

struct ManifestEntry {
  std::string artifact;  // relative to the manifest's directory
  std::uintmax_t bytes = 0;
  std::string hash;  // FNV-1a of the file contents
  std::string fingerprint;
  std::string command;
};

inline constexpr const char* kManifestName = "manifest.csv";
inline constexpr const char* kManifestHeader = "artifact,bytes,fnv1a,config_fingerprint,command";

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& directory);

// Hashes each artifact, replaces any rows with the same name and rewrites the
// manifest sorted by artifact.
void update_manifest(const std::filesystem::path& directory, const std::vector<std::string>& artifacts,
                     const std::string& fingerprint, const std::string& command);

}  // namespace cdm::cli
