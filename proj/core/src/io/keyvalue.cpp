#include "cdm/io/keyvalue.hpp"

#include <cctype>
#include <charconv>
#include <cmath>

#include "cdm/error.hpp"
#include "cdm/io/atomic_file.hpp"

namespace cdm::io {

const Entry* Section::find(std::string_view key) const {
  for (const auto& e : entries)
    if (e.key == key) return &e;
  return nullptr;
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

namespace {

bool valid_name(std::string_view s) {
  if (s.empty()) return false;
  for (char ch : s)
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' || ch == '.')) return false;
  return true;
}

}  // namespace

Document parse_keyvalue(std::string_view text, const std::string& path) {
  Document doc;
  doc.path = path;
  doc.sections.push_back(Section{"", 0, {}});
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = text.find('\n', pos);
    std::string_view raw = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    pos = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(path, line_no, "unterminated section header");
      const std::string name = trim(std::string_view(line).substr(1, line.size() - 2));
      if (!valid_name(name)) throw ParseError(path, line_no, "invalid section name '" + name + "'");
      doc.sections.push_back(Section{name, line_no, {}});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(path, line_no, "expected 'key = value'");
    std::string key = trim(std::string_view(line).substr(0, eq));
    std::string value = trim(std::string_view(line).substr(eq + 1));
    if (!valid_name(key)) throw ParseError(path, line_no, "invalid key '" + key + "'");
    if (value.empty()) throw ParseError(path, line_no, "missing value for '" + key + "'");
    auto& section = doc.sections.back();
    if (section.find(key)) throw ParseError(path, line_no, "duplicate key '" + key + "'");
    section.entries.push_back(Entry{std::move(key), std::move(value), line_no});
  }
  return doc;
}

Document load_keyvalue(const std::string& path) { return parse_keyvalue(read_file(path), path); }

double parse_double(const Document& doc, const Entry& entry) {
  double v = 0.0;
  const char* first = entry.value.data();
  const char* last = first + entry.value.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v))
    throw ParseError(doc.path, entry.line, "'" + entry.key + "' expects a finite number, got '" + entry.value + "'");
  return v;
}

long long parse_int(const Document& doc, const Entry& entry) {
  long long v = 0;
  const char* first = entry.value.data();
  const char* last = first + entry.value.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    throw ParseError(doc.path, entry.line, "'" + entry.key + "' expects an integer, got '" + entry.value + "'");
  return v;
}

bool parse_bool(const Document& doc, const Entry& entry) {
  if (entry.value == "true" || entry.value == "on" || entry.value == "1") return true;
  if (entry.value == "false" || entry.value == "off" || entry.value == "0") return false;
  throw ParseError(doc.path, entry.line, "'" + entry.key + "' expects true/false, got '" + entry.value + "'");
}

std::vector<double> parse_double_list(const Document& doc, const Entry& entry) {
  std::vector<double> out;
  std::string_view rest = entry.value;
  while (true) {
    const auto comma = rest.find(',');
    Entry item{entry.key, trim(rest.substr(0, comma)), entry.line};
    out.push_back(parse_double(doc, item));
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace cdm::io
