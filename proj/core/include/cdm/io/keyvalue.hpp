#pragma once

// Line-oriented "key = value" documents with optional [section] headers.
// '#' starts a comment. Keys before the first header belong to the unnamed
// section "". Sections may repeat; keys may not repeat within one section.

#include <string>
#include <string_view>
#include <vector>

namespace cdm::io {

struct Entry {
  std::string key;
  std::string value;
  int line = 0;
};

struct Section {
  std::string name;
  int line = 0;
  std::vector<Entry> entries;

  const Entry* find(std::string_view key) const;
};

struct Document {
  std::string path;  // for diagnostics only
  std::vector<Section> sections;
};

// Throws ParseError with the offending line on malformed input.
Document parse_keyvalue(std::string_view text, const std::string& path);
Document load_keyvalue(const std::string& path);

// Strict scalar conversions; failures throw ParseError at `entry.line`.
double parse_double(const Document& doc, const Entry& entry);
long long parse_int(const Document& doc, const Entry& entry);
bool parse_bool(const Document& doc, const Entry& entry);
std::vector<double> parse_double_list(const Document& doc, const Entry& entry);

std::string trim(std::string_view s);

// Shortest text that reads back to the same double.
std::string format_double(double v);

}  // namespace cdm::io
