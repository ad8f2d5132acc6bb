#include "cli/config.hpp"

#include <cstdlib>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

#include "cdm/error.hpp"
#include "cdm/io/atomic_file.hpp"
#include "cdm/io/keyvalue.hpp"

namespace cdm::cli {
namespace {

namespace fs = std::filesystem;
using io::Document;
using io::Entry;

struct Field {
  std::string section;
  std::string key;
  std::string help;
  std::function<void(const Document&, const Entry&, RunConfig&)> parse;
  std::function<std::string(const RunConfig&)> format;
};

[[noreturn]] void fail(const Document& doc, const Entry& e, const std::string& msg) {
  throw ParseError(doc.path, e.line, "'" + e.key + "' " + msg);
}

template <class T>
std::string range_text(T lo, T hi) {
  std::ostringstream s;
  s << "[" << lo << ", " << hi << "]";
  return s.str();
}

template <class Get>
Field real_field(std::string section, std::string key, Get get, double lo, double hi, bool open_lo = false) {
  std::string help = "number in " + std::string(open_lo ? "(" : "[") + io::format_double(lo) + ", " +
                     io::format_double(hi) + "]";
  return Field{section, key, help,
               [=](const Document& doc, const Entry& e, RunConfig& c) {
                 const double v = io::parse_double(doc, e);
                 if (v > hi || v < lo || (open_lo && v == lo)) fail(doc, e, "must be a " + help);
                 get(c) = v;
               },
               [=](const RunConfig& c) { return io::format_double(get(const_cast<RunConfig&>(c))); }};
}

template <class Get>
Field int_field(std::string section, std::string key, Get get, long long lo, long long hi) {
  std::string help = "integer in " + range_text(lo, hi);
  return Field{section, key, help,
               [=](const Document& doc, const Entry& e, RunConfig& c) {
                 const long long v = io::parse_int(doc, e);
                 if (v < lo || v > hi) fail(doc, e, "must be an " + help);
                 get(c) = static_cast<std::remove_reference_t<decltype(get(c))>>(v);
               },
               [=](const RunConfig& c) { return std::to_string(get(const_cast<RunConfig&>(c))); }};
}

template <class Get>
Field bool_field(std::string section, std::string key, Get get) {
  return Field{section, key, "true or false",
               [=](const Document& doc, const Entry& e, RunConfig& c) { get(c) = io::parse_bool(doc, e); },
               [=](const RunConfig& c) { return std::string(get(const_cast<RunConfig&>(c)) ? "true" : "false"); }};
}

template <class Get, class Parse, class Show>
Field enum_field(std::string section, std::string key, std::string choices, Get get, Parse parse, Show show) {
  return Field{section, key, "one of " + choices,
               [=](const Document& doc, const Entry& e, RunConfig& c) {
                 try {
                   get(c) = parse(e.value);
                 } catch (const ContractError&) {
                   fail(doc, e, "must be one of " + choices + ", got '" + e.value + "'");
                 }
               },
               [=](const RunConfig& c) { return std::string(show(get(const_cast<RunConfig&>(c)))); }};
}

template <class Get>
Field path_field(std::string section, std::string key, std::string help, Get get) {
  return Field{section, key, help,
               [=](const Document&, const Entry& e, RunConfig& c) { get(c) = fs::path(e.value); },
               [=](const RunConfig& c) { return get(const_cast<RunConfig&>(c)).generic_string(); }};
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto comma = s.find(',', pos);
    out.push_back(io::trim(std::string_view(s).substr(pos, comma == std::string::npos ? std::string::npos : comma - pos)));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

template <class T, class Get>
Field int_list_field(std::string section, std::string key, Get get, long long lo, long long hi) {
  std::string help = "comma-separated integers in " + range_text(lo, hi);
  return Field{section, key, help,
               [=](const Document& doc, const Entry& e, RunConfig& c) {
                 std::vector<T> values;
                 for (const auto& item : split_list(e.value)) {
                   const long long v = io::parse_int(doc, Entry{e.key, item, e.line});
                   if (v < lo || v > hi) fail(doc, e, "must hold " + help);
                   values.push_back(static_cast<T>(v));
                 }
                 get(c) = std::move(values);
               },
               [=](const RunConfig& c) {
                 std::string s;
                 for (const auto& v : get(const_cast<RunConfig&>(c))) s += (s.empty() ? "" : ", ") + std::to_string(v);
                 return s;
               }};
}

const std::vector<Field>& schema() {
  constexpr double inf = std::numeric_limits<double>::max();
  constexpr long long big = 1'000'000'000LL;
  constexpr long long seed_max = std::numeric_limits<long long>::max();
  static const std::vector<Field> fields = {
      path_field("run", "output", "directory; relative paths use $CDM_OUTPUT_ROOT or the working directory",
                 [](RunConfig& c) -> fs::path& { return c.output; }),
      path_field("run", "teacher", "checkpoint path relative to output",
                 [](RunConfig& c) -> fs::path& { return c.teacher_checkpoint; }),
      path_field("run", "student", "checkpoint path relative to output",
                 [](RunConfig& c) -> fs::path& { return c.student_checkpoint; }),
      real_field("run", "time_floor", [](RunConfig& c) -> double& { return c.time_floor; }, 0.0, 0.5, true),
      int_field("run", "log_every", [](RunConfig& c) -> long& { return c.log_every; }, 0, big),

      path_field("data", "spec", "mixture spec file relative to the config file",
                 [](RunConfig& c) -> fs::path& { return c.spec; }),

      int_field("model", "hidden", [](RunConfig& c) -> int& { return c.model.hidden; }, 1, 4096),
      int_field("model", "depth", [](RunConfig& c) -> int& { return c.model.depth; }, 1, 64),
      enum_field("model", "activation", "silu, tanh", [](RunConfig& c) -> ad::Activation& { return c.model.activation; },
                 ad::parse_activation, [](ad::Activation a) { return ad::to_string(a); }),
      int_field("model", "time_features", [](RunConfig& c) -> int& { return c.model.time_features; }, 2, 1024),
      int_field("model", "cond_features", [](RunConfig& c) -> int& { return c.model.cond_features; }, 1, 1024),

      int_field("teacher", "steps", [](RunConfig& c) -> long& { return c.teacher.steps; }, 0, big),
      int_field("teacher", "batch", [](RunConfig& c) -> int& { return c.teacher.batch; }, 1, 1 << 20),
      real_field("teacher", "lr", [](RunConfig& c) -> double& { return c.teacher.lr; }, 0.0, 1.0),
      real_field("teacher", "lr_final", [](RunConfig& c) -> double& { return c.teacher.lr_final; }, 0.0, 1.0),
      real_field("teacher", "weight_decay", [](RunConfig& c) -> double& { return c.teacher.weight_decay; }, 0.0, 1.0),
      real_field("teacher", "cond_dropout", [](RunConfig& c) -> double& { return c.teacher.cond_dropout; }, 0.0, 1.0),
      real_field("teacher", "divergence_factor", [](RunConfig& c) -> double& { return c.teacher.divergence_factor; },
                 1.0, inf),
      int_field("teacher", "seed", [](RunConfig& c) -> std::uint64_t& { return c.teacher.seed; }, 0, seed_max),

      real_field("distill", "alpha", [](RunConfig& c) -> double& { return c.distill.alpha; }, 0.0, 100.0),
      int_field("distill", "n_max", [](RunConfig& c) -> int& { return c.distill.n_max; }, 1, 1000),
      int_field("distill", "ttur", [](RunConfig& c) -> int& { return c.distill.ttur; }, 0, 100),
      real_field("distill", "student_lr", [](RunConfig& c) -> double& { return c.distill.student_lr; }, 0.0, 1.0),
      real_field("distill", "fake_lr", [](RunConfig& c) -> double& { return c.distill.fake_lr; }, 0.0, 1.0),
      real_field("distill", "beta1", [](RunConfig& c) -> double& { return c.distill.beta1; }, 0.0, 0.999999),
      real_field("distill", "beta2", [](RunConfig& c) -> double& { return c.distill.beta2; }, 0.0, 0.999999),
      real_field("distill", "weight_decay", [](RunConfig& c) -> double& { return c.distill.weight_decay; }, 0.0, 1.0),
      bool_field("distill", "ca", [](RunConfig& c) -> bool& { return c.distill.use_ca; }),
      bool_field("distill", "dm", [](RunConfig& c) -> bool& { return c.distill.use_dm; }),
      bool_field("distill", "cdm", [](RunConfig& c) -> bool& { return c.distill.use_cdm; }),
      enum_field("distill", "schedule", "dynamic, fixed",
                 [](RunConfig& c) -> flow::ScheduleMode& { return c.distill.schedule; }, flow::parse_schedule_mode,
                 [](flow::ScheduleMode m) { return flow::to_string(m); }),
      int_field("distill", "fixed_steps", [](RunConfig& c) -> int& { return c.distill.fixed_steps; }, 1, 1000),
      int_field("distill", "batch", [](RunConfig& c) -> int& { return c.distill.batch; }, 1, 1 << 20),
      int_field("distill", "iterations", [](RunConfig& c) -> long& { return c.distill.iterations; }, 0, big),
      int_field("distill", "seed", [](RunConfig& c) -> std::uint64_t& { return c.distill.seed; }, 0, seed_max),
      enum_field("distill", "perturbation", "velocity, gaussian, none",
                 [](RunConfig& c) -> distill::Perturbation& { return c.distill.cdm.perturbation; },
                 distill::parse_perturbation, [](distill::Perturbation p) { return distill::to_string(p); }),
      enum_field("distill", "extrapolation", "detached, attached",
                 [](RunConfig& c) -> distill::Extrapolation& { return c.distill.cdm.extrapolation; },
                 distill::parse_extrapolation, [](distill::Extrapolation e) { return distill::to_string(e); }),
      enum_field("distill", "target", "local, full_trajectory",
                 [](RunConfig& c) -> distill::CdmTarget& { return c.distill.cdm.target; }, distill::parse_cdm_target,
                 [](distill::CdmTarget t) { return distill::to_string(t); }),
      real_field("distill", "w_min", [](RunConfig& c) -> double& { return c.distill.clamp.min; }, 0.0, inf, true),
      real_field("distill", "w_max", [](RunConfig& c) -> double& { return c.distill.clamp.max; }, 0.0, inf, true),

      int_field("eval", "samples", [](RunConfig& c) -> int& { return c.eval.samples; }, 2, 1 << 22),
      int_field("eval", "energy_samples", [](RunConfig& c) -> int& { return c.eval.energy_samples; }, 2, 1 << 16),
      int_field("eval", "projections", [](RunConfig& c) -> int& { return c.eval.projections; }, 1, 100000),
      int_field("eval", "student_steps", [](RunConfig& c) -> int& { return c.eval.student_steps; }, 1, 100000),
      int_field("eval", "teacher_steps", [](RunConfig& c) -> int& { return c.eval.teacher_steps; }, 1, 100000),
      real_field("eval", "guided_alpha", [](RunConfig& c) -> double& { return c.eval.guided_alpha; }, 0.0, 100.0),
      int_field("eval", "m2_trajectories", [](RunConfig& c) -> int& { return c.eval.m2_trajectories; }, 1, 1 << 20),
      int_field("eval", "m2_steps", [](RunConfig& c) -> int& { return c.eval.m2_steps; }, 1, 100000),
      real_field("eval", "m2_probe", [](RunConfig& c) -> double& { return c.eval.m2_probe; }, 0.0, 0.5, true),
      int_field("eval", "seed", [](RunConfig& c) -> std::uint64_t& { return c.eval.seed; }, 0, seed_max),
      int_field("eval", "workers", [](RunConfig& c) -> int& { return c.eval.workers; }, 1, 256),

      int_list_field<std::uint64_t>("study", "seeds", [](RunConfig& c) -> std::vector<std::uint64_t>& { return c.seeds; },
                                    0, seed_max),
      int_list_field<int>("study", "n_max", [](RunConfig& c) -> std::vector<int>& { return c.n_max_values; }, 1, 1000),
  };
  return fields;
}

const Field* find_field(const std::string& section, const std::string& key) {
  for (const auto& f : schema())
    if (f.section == section && f.key == key) return &f;
  return nullptr;
}

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p.lexically_normal();
  return (base / p).lexically_normal();
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const std::string& path, const Overrides& overrides,
                           const fs::path& output_root) {
  const Document doc = io::parse_keyvalue(text, path);
  RunConfig cfg;
  cfg.source = path;
  std::map<std::pair<std::string, std::string>, int> seen;

  for (const auto& section : doc.sections) {
    if (section.name.empty() && !section.entries.empty())
      throw ParseError(path, section.entries.front().line, "key '" + section.entries.front().key +
                                                               "' must appear inside a [section]");
    if (!section.name.empty()) {
      bool known = false;
      for (const auto& f : schema()) known = known || f.section == section.name;
      if (!known) throw ParseError(path, section.line, "unknown section [" + section.name + "]");
    }
    for (const auto& e : section.entries) {
      const Field* f = find_field(section.name, e.key);
      if (!f) throw ParseError(path, e.line, "unknown key '" + e.key + "' in [" + section.name + "]");
      if (auto [it, fresh] = seen.emplace(std::make_pair(section.name, e.key), e.line); !fresh)
        throw ParseError(path, e.line, "'" + e.key + "' already set in [" + section.name + "] at line " +
                                           std::to_string(it->second));
      f->parse(doc, e, cfg);
    }
  }

  for (const auto& [name, value] : overrides) {
    const auto dot = name.find('.');
    Document cli_doc{"--" + name, {}};
    if (dot == std::string::npos) throw ParseError(cli_doc.path, 0, "overrides take the form --section.key=value");
    const Field* f = find_field(name.substr(0, dot), name.substr(dot + 1));
    if (!f) throw ParseError(cli_doc.path, 0, "unknown config key '" + name + "'");
    const std::string v = io::trim(value);
    if (v.empty()) throw ParseError(cli_doc.path, 0, "missing value");
    f->parse(cli_doc, Entry{f->key, v, 0}, cfg);
  }

  if (cfg.spec.empty()) throw ParseError(path, 0, "missing required key 'spec' in [data]");
  const fs::path config_dir = fs::path(path).parent_path();
  cfg.spec = resolve(cfg.spec, config_dir.empty() ? fs::current_path() : fs::absolute(config_dir));
  cfg.output = resolve(cfg.output, output_root.empty() ? fs::current_path() : fs::absolute(output_root));
  if (cfg.seeds.empty()) throw ParseError(path, 0, "[study] seeds must not be empty");
  if (cfg.n_max_values.empty()) throw ParseError(path, 0, "[study] n_max must not be empty");
  if (cfg.distill.clamp.min > cfg.distill.clamp.max) throw ParseError(path, 0, "[distill] w_min exceeds w_max");
  if (cfg.eval.energy_samples > cfg.eval.samples)
    throw ParseError(path, 0, "[eval] energy_samples exceeds samples");

  cfg.teacher.time_floor = cfg.time_floor;
  cfg.distill.time_floor = cfg.time_floor;
  try {
    cfg.distill.validate();
  } catch (const ContractError& e) {
    throw ParseError(path, 0, e.what());
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path, const Overrides& overrides, const fs::path& output_root) {
  return parse_run_config(io::read_file(path), path, overrides, output_root);
}

fs::path output_root_from_env() {
  const char* root = std::getenv(kOutputRootEnv);
  return root ? fs::path(root) : fs::path();
}

std::string format_run_config(const RunConfig& config) {
  std::ostringstream out;
  std::string section;
  for (const auto& f : schema()) {
    if (f.section != section) {
      out << (section.empty() ? "" : "\n") << "[" << f.section << "]\n";
      section = f.section;
    }
    out << f.key << " = " << f.format(config) << "\n";
  }
  return out.str();
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& f : schema()) out.push_back(f.section + "." + f.key + "  " + f.help);
  return out;
}

fs::path teacher_path(const RunConfig& config) { return resolve(config.teacher_checkpoint, config.output); }
fs::path student_path(const RunConfig& config) { return resolve(config.student_checkpoint, config.output); }

}  // namespace cdm::cli
