#include "cli/commands.hpp"

#include <algorithm>
#include <sstream>

#include "cdm/error.hpp"
#include "cdm/eval/plot.hpp"
#include "cdm/flow/checkpoint.hpp"
#include "cdm/flow/sampler.hpp"
#include "cdm/io/atomic_file.hpp"
#include "cdm/io/fingerprint.hpp"
#include "cdm/io/keyvalue.hpp"
#include "cdm/oracle/spec_io.hpp"
#include "cdm/version.hpp"
#include "cli/manifest.hpp"

namespace cdm::cli {
namespace {

namespace fs = std::filesystem;
using io::format_double;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string color(std::size_t i) { return kPalette[i % std::size(kPalette)]; }

class Writer {
 public:
  explicit Writer(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  void put(const std::string& name, std::string_view bytes) {
    io::write_file_atomic(dir_ / name, bytes);
    if (std::find(names_.begin(), names_.end(), name) == names_.end()) names_.push_back(name);
  }
  // For files written elsewhere (checkpoints); recorded only when inside dir.
  void record(const fs::path& path) {
    const fs::path rel = path.lexically_normal().lexically_relative(dir_.lexically_normal());
    if (rel.empty() || *rel.begin() == "..") return;
    if (std::find(names_.begin(), names_.end(), rel.generic_string()) == names_.end())
      names_.push_back(rel.generic_string());
  }
  CommandOutput finish(const std::string& fingerprint, const std::string& command) {
    update_manifest(dir_, names_, fingerprint, command);
    return {dir_, names_};
  }
  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  std::vector<std::string> names_;
};

std::string version_text() { return std::string("cdmlab ") + version() + "\n"; }

void write_header(Writer& w, const std::string& resolved) {
  w.put("resolved.cfg", resolved);
  w.put("VERSION", version_text());
}

oracle::MixtureSpec load_spec(const RunConfig& config) { return oracle::load_mixture_spec(config.spec.string()); }

void check_compatible(const flow::VelocityModel& model, const oracle::MixtureSpec& spec, const fs::path& path) {
  if (model.config().dim != spec.dim || model.config().num_classes != spec.num_classes())
    throw ContractError(path.string() + ": checkpoint has dim " + std::to_string(model.config().dim) + " and " +
                        std::to_string(model.config().num_classes) + " classes, spec has dim " +
                        std::to_string(spec.dim) + " and " + std::to_string(spec.num_classes()));
}

flow::VelocityModel load_model(const fs::path& path) {
  if (!fs::exists(path)) throw IoError(path.string() + ": checkpoint not found");
  return flow::load_checkpoint(path);
}

std::vector<int> round_robin(int n, int classes) {
  std::vector<int> c(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) c[static_cast<std::size_t>(i)] = i % std::max(classes, 1);
  return c;
}

Mat head(const Mat& m, Eigen::Index n) { return m.topRows(std::min(n, m.rows())); }

std::string samples_csv(const Mat& x, const std::vector<int>& classes) {
  std::ostringstream out;
  for (Eigen::Index j = 0; j < x.cols(); ++j) out << "x" << j << ",";
  out << "class\n";
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) out << format_double(x(i, j)) << ",";
    out << classes[static_cast<std::size_t>(i)] << "\n";
  }
  return out.str();
}

std::string error_order_svg(const flow::VelocityField& field, const std::vector<int>& c, const Mat& x_start,
                            const std::string& title) {
  const auto res = eval::euler_error_order(field, x_start, c);
  return eval::line_svg({{"local", res.step_sizes, res.local_errors, color(0)},
                         {"global", res.step_sizes, res.global_errors, color(1)}},
                        title + " (local slope " + format_double(std::round(res.local_slope * 100) / 100) +
                            ", global slope " + format_double(std::round(res.global_slope * 100) / 100) + ")",
                        "step size", "max error", true);
}

std::string seeds_of(const RunConfig& c) { return eval::seeds_label({c.distill.seed}); }

}  // namespace

std::string config_fingerprint(const RunConfig& config) {
  std::uint64_t h = io::fnv1a(format_run_config(config));
  if (!config.spec.empty() && fs::exists(config.spec)) h = io::fnv1a(io::read_file(config.spec), h);
  return io::hex64(h);
}

CommandOutput train_teacher_command(const RunConfig& config, std::ostream& log) {
  const auto spec = load_spec(config);
  flow::ModelConfig mc = config.model;
  mc.dim = spec.dim;
  mc.num_classes = spec.num_classes();
  const std::string resolved = format_run_config(config);
  const std::string fp = config_fingerprint(config);

  const long every = config.log_every;
  const auto result = flow::train_teacher(spec, mc, config.teacher, [&](const flow::TeacherRecord& r) {
    if (every > 0 && (r.step + 1) % every == 0)
      log << "train-teacher step " << r.step + 1 << "/" << config.teacher.steps << " loss " << r.loss << " lr " << r.lr
          << "\n";
  });

  Writer w(config.output);
  write_header(w, resolved);
  std::ostringstream csv;
  csv << "step,loss,lr\n";
  for (const auto& r : result.history) csv << r.step << "," << format_double(r.loss) << "," << format_double(r.lr) << "\n";
  w.put("teacher_loss.csv", csv.str());
  const fs::path ckpt = teacher_path(config);
  flow::save_checkpoint(result.model, ckpt);
  w.record(ckpt);
  log << "train-teacher wrote " << ckpt.string() << " (checksum " << io::hex64(result.model.checksum()) << ")\n";
  return w.finish(fp, "train-teacher");
}

CommandOutput distill_command(const RunConfig& config, std::ostream& log) {
  const auto spec = load_spec(config);
  const fs::path tpath = teacher_path(config);
  const flow::VelocityModel teacher = load_model(tpath);
  check_compatible(teacher, spec, tpath);
  const std::string fp = config_fingerprint(config);

  const long every = config.log_every;
  const auto result =
      distill::distill(teacher, config.distill, [&](long it, const distill::LossTerms& t, const distill::Distiller&) {
        if (every > 0 && (it + 1) % every == 0)
          log << "distill iteration " << it + 1 << "/" << config.distill.iterations << " ca " << t.ca << " dm " << t.dm
              << " cdm " << t.cdm << " fake " << t.fake_loss << (t.skipped ? " skipped: " + t.skip_reason : "")
              << "\n";
      });

  Writer w(config.output);
  write_header(w, format_run_config(config));
  w.put("distill_metrics.csv", distill::metrics_csv(result.history));
  const fs::path spath = student_path(config);
  flow::save_checkpoint(result.student, spath);
  w.record(spath);
  const fs::path fpath = config.output / "fake.ckpt";
  flow::save_checkpoint(result.fake, fpath);
  w.record(fpath);
  log << "distill wrote " << spath.string() << " (checksum " << io::hex64(result.student.checksum()) << ", "
      << result.skipped << " skipped iterations)\n";
  return w.finish(fp, "distill");
}

CommandOutput eval_command(const RunConfig& config, std::ostream& log) {
  const auto spec = load_spec(config);
  const fs::path tpath = teacher_path(config), spath = student_path(config);
  const flow::VelocityModel teacher = load_model(tpath);
  const flow::VelocityModel student = load_model(spath);
  check_compatible(teacher, spec, tpath);
  check_compatible(student, spec, spath);
  const std::string fp = config_fingerprint(config);
  const auto& es = config.eval;

  const eval::Reference ref = eval::make_reference(teacher, spec, es);
  const eval::StudentMetrics m = eval::evaluate_student(student, ref, es);
  const std::string seeds = seeds_of(config);
  const long n = es.samples, ne = es.energy_samples, nm = es.m2_trajectories;
  const std::vector<eval::EvalReport> reports = {
      {"teacher_sw2_data", ref.teacher_sw2, 0.0, n, seeds, fp},
      {"student_sw2_data", m.sw2_data, 0.0, n, seeds, fp},
      {"sw2_ratio", m.sw2_data / ref.teacher_sw2, 0.0, n, seeds, fp},
      {"energy_data", m.energy_data.value, m.energy_data.std_error, ne, seeds, fp},
      {"energy_teacher_free", m.energy_free.value, m.energy_free.std_error, ne, seeds, fp},
      {"energy_teacher_guided", m.energy_guided.value, m.energy_guided.std_error, ne, seeds, fp},
      {"m2_sup", m.m2.sup, 0.0, nm, seeds, fp},
      {"m2_mean", m.m2.mean, 0.0, nm, seeds, fp},
      {"m2_q90", m.m2.q90, 0.0, nm, seeds, fp},
  };
  for (const auto& r : reports) log << "eval " << r.metric << " " << r.value << "\n";

  Writer w(config.output);
  write_header(w, format_run_config(config));
  w.put("eval.csv", eval::reports_csv(reports));

  const Mat student_samples =
      flow::euler_sample(student, flow::Schedule::fixed(es.student_steps, config.time_floor), ref.x_start, ref.classes)
          .final_sample;
  const Eigen::Index shown = 1000;
  w.put("eval_samples.svg",
        eval::scatter_svg({{"data", head(ref.data, shown), "#7f7f7f"},
                           {"teacher " + std::to_string(es.teacher_steps) + " steps", head(ref.teacher_free, shown),
                            color(0)},
                           {"student " + std::to_string(es.student_steps) + " steps", head(student_samples, shown),
                            color(1)}},
                          "held-out data, teacher and student samples"));
  w.put("m2_profile.svg", eval::line_svg({{"student", m.m2.times, m.m2.time_sup, color(1)}},
                                         "max |dv/dtau| along the trajectory", "tau", "max norm", false));

  const Eigen::Index rows = std::min<Eigen::Index>(64, ref.x_start.rows());
  const std::vector<int> c(ref.classes.begin(), ref.classes.begin() + rows);
  w.put("error_order.svg", error_order_svg(student, c, ref.x_start.topRows(rows), "student Euler error"));
  return w.finish(fp, "eval");
}

CommandOutput sample_command(const SampleOptions& options, std::ostream& log) {
  if (options.n < 1) throw ContractError("sample: n must be >= 1");
  if (options.steps < 1) throw ContractError("sample: steps must be >= 1");
  if (!(options.alpha >= 0.0)) throw ContractError("sample: alpha must be >= 0");
  const flow::VelocityModel model = load_model(options.checkpoint);
  const std::vector<int> classes = round_robin(options.n, model.config().num_classes);

  Rng rng(options.seed);
  const Mat x_start = rng.normal(options.n, model.dim());
  const auto traj = flow::euler_sample(model, flow::Schedule::fixed(options.steps), x_start, classes,
                                       flow::GuidanceConfig{options.alpha, -1});

  std::ostringstream resolved;
  resolved << "[sample]\ncheckpoint = " << fs::absolute(options.checkpoint).lexically_normal().generic_string()
           << "\nn = " << options.n << "\nsteps = " << options.steps << "\nseed = " << options.seed
           << "\nalpha = " << format_double(options.alpha) << "\n";
  const std::string fp =
      io::hex64(io::fnv1a(io::read_file(options.checkpoint), io::fnv1a(resolved.str())));

  Writer w(options.output);
  w.put("resolved.cfg", resolved.str());
  w.put("VERSION", version_text());
  w.put("samples.csv", samples_csv(traj.final_sample, classes));
  std::vector<eval::ScatterSeries> by_class;
  for (int k = 0; k < std::max(model.config().num_classes, 1); ++k) {
    std::vector<Eigen::Index> rows;
    for (int i = 0; i < options.n; ++i)
      if (classes[static_cast<std::size_t>(i)] == k) rows.push_back(i);
    Mat pts(static_cast<Eigen::Index>(rows.size()), model.dim());
    for (std::size_t i = 0; i < rows.size(); ++i) pts.row(static_cast<Eigen::Index>(i)) = traj.final_sample.row(rows[i]);
    by_class.push_back({"class " + std::to_string(k), pts, color(static_cast<std::size_t>(k))});
  }
  w.put("samples.svg", eval::scatter_svg(by_class, std::to_string(options.steps) + "-step samples"));

  if (model.dim() >= 2) {
    std::vector<eval::LineSeries> paths;
    for (int i = 0; i < std::min(options.n, 24); ++i) {
      eval::LineSeries s{"", {}, {}, color(static_cast<std::size_t>(classes[static_cast<std::size_t>(i)]))};
      for (const Mat& state : traj.states) {
        s.x.push_back(state(i, 0));
        s.y.push_back(state(i, 1));
      }
      s.x.push_back(traj.final_sample(i, 0));
      s.y.push_back(traj.final_sample(i, 1));
      paths.push_back(std::move(s));
    }
    w.put("trajectories.svg", eval::line_svg(paths, "sampler trajectories", "x0", "x1", false));
  }
  log << "sample wrote " << options.n << " samples to " << (w.dir() / "samples.csv").string() << "\n";
  return w.finish(fp, "sample");
}

const std::vector<std::string>& study_names() {
  static const std::vector<std::string> names = {"schedule", "cfg-free", "m2", "ablation"};
  return names;
}

CommandOutput study_command(const std::string& name, const RunConfig& config, std::ostream& log) {
  const auto& names = study_names();
  if (std::find(names.begin(), names.end(), name) == names.end())
    throw ContractError("unknown study '" + name + "' (schedule, cfg-free, m2, ablation)");
  const auto spec = load_spec(config);
  const fs::path tpath = teacher_path(config);
  const flow::VelocityModel teacher = load_model(tpath);
  check_compatible(teacher, spec, tpath);
  const std::string fp = config_fingerprint(config);

  log << "study " << name << ": building reference\n";
  const eval::Reference ref = eval::make_reference(teacher, spec, config.eval);
  log << "study " << name << ": teacher sw2 " << ref.teacher_sw2 << ", running cells\n";

  eval::StudyOutput out;
  std::vector<eval::ScatterSeries> series;
  std::string title, svg;
  auto pairs = [&](const std::string& label, const std::string& xcell, const std::string& ycell,
                   double (*metric)(const eval::StudentMetrics&), std::size_t k) {
    std::vector<double> xs, ys;
    for (const auto& r : out.cells) {
      if (r.cell == xcell) xs.push_back(metric(r.metrics));
      if (r.cell == ycell) ys.push_back(metric(r.metrics));
    }
    Mat pts(static_cast<Eigen::Index>(std::min(xs.size(), ys.size())), 2);
    for (Eigen::Index i = 0; i < pts.rows(); ++i) pts.row(i) << xs[static_cast<std::size_t>(i)], ys[static_cast<std::size_t>(i)];
    series.push_back({label, pts, color(k)});
  };
  const auto sw2 = [](const eval::StudentMetrics& m) { return m.sw2_data; };
  const auto m2 = [](const eval::StudentMetrics& m) { return m.m2.sup; };

  if (name == "schedule") {
    out = eval::schedule_study(teacher, ref, config.distill, config.n_max_values, config.seeds, config.eval, fp);
    for (std::size_t k = 0; k < config.n_max_values.size(); ++k)
      pairs("dynamic n_max " + std::to_string(config.n_max_values[k]), "fixed",
            "dynamic_nmax" + std::to_string(config.n_max_values[k]), sw2, k);
    title = "SW2 per seed: fixed schedule (x) vs dynamic (y)";
  } else if (name == "cfg-free") {
    out = eval::cfg_free_study(teacher, ref, config.distill, config.seeds, config.eval, fp);
    Mat pts(static_cast<Eigen::Index>(out.cells.size()), 2);
    for (std::size_t i = 0; i < out.cells.size(); ++i)
      pts.row(static_cast<Eigen::Index>(i)) << out.cells[i].metrics.energy_guided.value,
          out.cells[i].metrics.energy_free.value;
    series.push_back({"DM-only seeds", pts, color(0)});
    title = "energy distance per seed: to guided teacher (x) vs to unguided teacher (y)";
  } else if (name == "m2") {
    out = eval::m2_study(teacher, ref, config.distill, config.seeds, config.eval, fp);
    pairs("seeds", "ca_dm", "ca_dm_cdm", m2, 0);
    title = "sup |dv/dtau| per seed: CA+DM (x) vs CA+DM+CDM (y)";
  } else {
    const auto cells = eval::ablation_cells(config.distill);
    out = eval::ablation_grid(teacher, ref, cells, config.seeds, config.eval, fp);
    for (std::size_t k = 0; k < cells.size(); ++k) {
      std::vector<double> v;
      for (const auto& r : out.cells)
        if (r.cell == cells[k].name) v.push_back(r.metrics.sw2_data);
      Mat pts(static_cast<Eigen::Index>(v.size()), 2);
      for (std::size_t i = 0; i < v.size(); ++i) pts.row(static_cast<Eigen::Index>(i)) << static_cast<double>(k), v[i];
      series.push_back({cells[k].name, pts, color(k)});
    }
    title = "SW2 to data per cell (x = cell index)";
  }
  if (name == "schedule" || name == "m2") {
    double lo = 1e300, hi = -1e300;
    for (const auto& s : series)
      for (Eigen::Index i = 0; i < s.points.size(); ++i) {
        lo = std::min(lo, s.points.data()[i]);
        hi = std::max(hi, s.points.data()[i]);
      }
    if (lo < hi) {
      Mat diag(2, 2);
      diag << lo, lo, hi, hi;
      series.push_back({"y = x", diag, "#7f7f7f"});
    }
  }
  for (const auto& r : out.reports) log << "study " << name << " " << r.metric << " " << r.value << "\n";

  RunConfig study_config = config;
  study_config.output = config.output / ("study_" + name);
  Writer w(study_config.output);
  write_header(w, format_run_config(config));
  w.put("reports.csv", eval::reports_csv(out.reports));
  w.put("cells.csv", eval::cells_csv(out.cells));
  w.put(name + ".svg", eval::scatter_svg(series, title));
  return w.finish(fp, "study " + name);
}

VerifyRun verify_command(const VerifyOptions& options, const VerifyHooks& hooks, const fs::path& output,
                         std::ostream& log) {
  VerifyRun run;
  run.results = run_verify(options, hooks);
  run.passed = std::all_of(run.results.begin(), run.results.end(), [](const CheckResult& r) { return r.passed; });
  for (const auto& r : run.results) log << format_check(r) << "\n";
  if (!output.empty()) {
    Writer w(output);
    w.put("VERSION", version_text());
    w.put("verify.csv", verify_csv(run.results));
    const eval::GaussianFlowField field(oracle::GaussianFlow(RowVec::Zero(2), 1.0));
    Rng rng(options.seed + 5);
    const std::vector<int> c(64, 0);
    w.put("euler_orders.svg", error_order_svg(field, c, rng.normal(64, 2), "Euler error on the standard Gaussian flow"));
    std::ostringstream opts;
    opts << "seed=" << options.seed << ";cases=" << options.tweedie_cases << ";batch=" << options.gradient_batch;
    w.finish(io::hex64(io::fnv1a(opts.str())), "verify");
  }
  log << (run.passed ? "verify: all checks passed\n" : "verify: FAILED\n");
  return run;
}

std::string formats_help() {
  std::ostringstream out;
  out << R"(Output files

teacher_loss.csv      step,loss,lr
                      one row per teacher optimizer step; loss is the flow-matching
                      loss on that step's batch, lr the cosine-decayed rate used.
distill_metrics.csv   )"
      << distill::kMetricsHeader << R"(
                      one row per distillation iteration. ca, dm, cdm are the loss
                      terms (0 when switched off), total their sum, fake_loss the
                      mean fake-teacher loss over the TTUR updates, w_* the batch
                      mean weighting factors, w_clamped the rows whose factor hit a
                      clamp bound, n_steps the schedule length, anchor its 0-based
                      index, t_anchor the anchor time, stride mean |t' - t_anchor|,
                      skipped 1 when the student update was skipped. wall_time is
                      written as 0 so reruns are byte-identical.
samples.csv           x0,...,x{d-1},class
eval.csv, reports.csv metric,value,std_error,samples,seeds,fingerprint
                      std_error is 0 for point estimates; samples is the sample size
                      behind the estimate; seeds lists distillation seeds separated
                      by ';'; fingerprint is the config fingerprint.
cells.csv             cell,seed,sw2_data,energy_data,energy_data_se,energy_free,
                      energy_free_se,energy_guided,energy_guided_se,m2_sup,m2_q50,
                      m2_q90,m2_q99,skipped,checksum
verify.csv            name,identity,measured,relation,tolerance,status
manifest.csv          )"
      << kManifestHeader << R"(
                      every artifact in the directory with its size and FNV-1a hash.
resolved.cfg          the fully resolved configuration, every key listed.
VERSION               tool version.

Checkpoints (*.ckpt) are little-endian binaries: magic "CDMFLOW\0", u32 version,
u32 x 7 model shape fields, u64 parameter count, f64 parameters.

Config keys (section.key), overridable as --section.key=value:
)";
  for (const auto& k : config_keys()) out << "  " << k << "\n";
  out << R"(
Mixture spec files:
  dim = 2
  [component]            # repeated
  weight = 0.5
  mean = 1.0, -1.0
  variance = 0.05
  label = 0              # optional, all-or-none
or a single top-level line: ring = components, radius, variance, classes

Exit status: 0 success, 1 runtime failure (missing checkpoint, I/O, failed
verify check), 2 usage or configuration error.
)";
  return out.str();
}

}  // namespace cdm::cli
