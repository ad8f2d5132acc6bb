#include "cli/manifest.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "cdm/error.hpp"
#include "cdm/io/atomic_file.hpp"
#include "cdm/io/fingerprint.hpp"

namespace cdm::cli {

namespace fs = std::filesystem;

std::vector<ManifestEntry> read_manifest(const fs::path& directory) {
  const fs::path path = directory / kManifestName;
  std::vector<ManifestEntry> out;
  if (!fs::exists(path)) return out;
  std::istringstream in(io::read_file(path));
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) {
      if (line != kManifestHeader) throw ParseError(path.string(), 1, "unexpected manifest header");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::istringstream row(line);
    for (std::string col; std::getline(row, col, ',');) cols.push_back(col);
    if (cols.size() != 5) throw ParseError(path.string(), line_no, "expected 5 columns");
    ManifestEntry e;
    e.artifact = cols[0];
    try {
      e.bytes = std::stoull(cols[1]);
    } catch (const std::exception&) {
      throw ParseError(path.string(), line_no, "bad byte count '" + cols[1] + "'");
    }
    e.hash = cols[2];
    e.fingerprint = cols[3];
    e.command = cols[4];
    out.push_back(std::move(e));
  }
  return out;
}

void update_manifest(const fs::path& directory, const std::vector<std::string>& artifacts,
                     const std::string& fingerprint, const std::string& command) {
  std::map<std::string, ManifestEntry> rows;
  for (auto& e : read_manifest(directory)) rows[e.artifact] = std::move(e);
  for (const auto& name : artifacts) {
    const std::string bytes = io::read_file(directory / name);
    rows[name] = ManifestEntry{name, bytes.size(), io::hex64(io::fnv1a(bytes)), fingerprint, command};
  }
  std::ostringstream out;
  out << kManifestHeader << "\n";
  for (const auto& [name, e] : rows)
    out << e.artifact << "," << e.bytes << "," << e.hash << "," << e.fingerprint << "," << e.command << "\n";
  io::write_file_atomic(directory / kManifestName, out.str());
}

}  // namespace cdm::cli
