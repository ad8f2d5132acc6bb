#include "cdm/oracle/spec_io.hpp"

#include <cmath>
#include <sstream>

#include "cdm/error.hpp"
#include "cdm/io/atomic_file.hpp"
#include "cdm/io/keyvalue.hpp"

namespace cdm::oracle {

MixtureSpec parse_mixture_spec(const std::string& text, const std::string& path) {
  const io::Document doc = io::parse_keyvalue(text, path);
  const io::Section& top = doc.sections.front();
  MixtureSpec spec;
  bool have_dim = false;
  const io::Entry* ring = nullptr;
  for (const auto& e : top.entries) {
    if (e.key == "dim") {
      const long long d = io::parse_int(doc, e);
      if (d < 1 || d > 4096) throw ParseError(path, e.line, "dim must be in [1, 4096]");
      spec.dim = static_cast<int>(d);
      have_dim = true;
    } else if (e.key == "ring") {
      ring = &e;
    } else {
      throw ParseError(path, e.line, "unknown key '" + e.key + "'");
    }
  }

  if (ring) {
    if (doc.sections.size() > 1) throw ParseError(path, ring->line, "'ring' cannot be combined with [component]");
    const auto v = io::parse_double_list(doc, *ring);
    if (v.size() != 4 || v[0] != std::floor(v[0]) || v[3] != std::floor(v[3]) || v[0] < 1 || v[3] < 1 || v[3] > v[0])
      throw ParseError(path, ring->line, "'ring' expects components, radius, variance, classes");
    if (have_dim && spec.dim != 2) throw ParseError(path, ring->line, "'ring' requires dim = 2");
    try {
      return MixtureSpec::ring(static_cast<int>(v[0]), v[1], v[2], static_cast<int>(v[3]));
    } catch (const ContractError& err) {
      throw ParseError(path, ring->line, err.what());
    }
  }
  if (!have_dim) throw ParseError(path, 1, "missing 'dim'");

  std::vector<RowVec> means;
  int labeled = 0;
  for (std::size_t s = 1; s < doc.sections.size(); ++s) {
    const io::Section& sec = doc.sections[s];
    if (sec.name != "component") throw ParseError(path, sec.line, "unknown section [" + sec.name + "]");
    const io::Entry* w = sec.find("weight");
    const io::Entry* m = sec.find("mean");
    const io::Entry* v = sec.find("variance");
    if (!w || !m || !v) throw ParseError(path, sec.line, "component needs weight, mean and variance");
    for (const auto& e : sec.entries)
      if (e.key != "weight" && e.key != "mean" && e.key != "variance" && e.key != "label")
        throw ParseError(path, e.line, "unknown key '" + e.key + "'");

    const double weight = io::parse_double(doc, *w);
    if (weight < 0.0) throw ParseError(path, w->line, "weight must be non-negative");
    const auto mean = io::parse_double_list(doc, *m);
    if (static_cast<int>(mean.size()) != spec.dim)
      throw ParseError(path, m->line, "mean has " + std::to_string(mean.size()) + " entries, dim is " +
                                          std::to_string(spec.dim));
    const double variance = io::parse_double(doc, *v);
    if (!(variance > 0.0)) throw ParseError(path, v->line, "variance must be positive");
    if (const io::Entry* l = sec.find("label")) {
      const long long label = io::parse_int(doc, *l);
      if (label < 0 || label > 1'000'000) throw ParseError(path, l->line, "label out of range");
      spec.labels.push_back(static_cast<int>(label));
      ++labeled;
    }
    spec.weights.push_back(weight);
    means.push_back(Eigen::Map<const RowVec>(mean.data(), spec.dim));
    spec.variances.push_back(variance);
  }
  if (means.empty()) throw ParseError(path, 1, "no [component] sections");
  if (labeled != 0 && labeled != static_cast<int>(means.size()))
    throw ParseError(path, doc.sections.back().line, "either every component has a label or none does");
  spec.means.resize(static_cast<Eigen::Index>(means.size()), spec.dim);
  for (std::size_t k = 0; k < means.size(); ++k) spec.means.row(static_cast<Eigen::Index>(k)) = means[k];
  try {
    spec.validate();
  } catch (const ContractError& err) {
    throw ParseError(path, doc.sections.back().line, err.what());
  }
  return spec;
}

MixtureSpec load_mixture_spec(const std::string& path) { return parse_mixture_spec(io::read_file(path), path); }

std::string format_mixture_spec(const MixtureSpec& spec) {
  std::ostringstream out;
  out << "dim = " << spec.dim << "\n";
  for (int k = 0; k < spec.num_components(); ++k) {
    out << "\n[component]\n";
    out << "weight = " << io::format_double(spec.weights[static_cast<std::size_t>(k)]) << "\n";
    out << "mean = ";
    for (int j = 0; j < spec.dim; ++j) out << (j ? ", " : "") << io::format_double(spec.means(k, j));
    out << "\nvariance = " << io::format_double(spec.variances[static_cast<std::size_t>(k)]) << "\n";
    if (!spec.labels.empty()) out << "label = " << spec.labels[static_cast<std::size_t>(k)] << "\n";
  }
  return out.str();
}

}  // namespace cdm::oracle
