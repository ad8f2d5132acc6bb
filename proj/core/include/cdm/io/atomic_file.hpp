#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace cdm::io {

// Writes bytes to a sibling temporary file and renames it over `path`, so
// readers never observe a partial file. Creates parent directories.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

// Throws IoError naming the path when the file cannot be read.
std::string read_file(const std::filesystem::path& path);

}  // namespace cdm::io
