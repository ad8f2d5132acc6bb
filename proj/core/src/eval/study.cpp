#include "cdm/eval/study.hpp"

#include <atomic>
#include <exception>
#include <sstream>
#include <thread>

#include "cdm/error.hpp"
#include "cdm/flow/sampler.hpp"
#include "cdm/io/fingerprint.hpp"
#include "cdm/io/keyvalue.hpp"

namespace cdm::eval {
namespace {

Mat sample_field(const flow::VelocityField& field, int steps, const Reference& ref, double alpha) {
  return flow::euler_sample(field, flow::Schedule::fixed(steps), ref.x_start, ref.classes,
                            flow::GuidanceConfig{alpha, -1})
      .final_sample;
}

Estimate energy_subset(const Mat& a, const Mat& b, int n) {
  const Eigen::Index k = std::min<Eigen::Index>({a.rows(), b.rows(), static_cast<Eigen::Index>(n)});
  return energy_distance(a.topRows(k), b.topRows(k));
}

EvalReport report(std::string metric, double value, double se, long samples, const std::vector<std::uint64_t>& seeds,
                  const std::string& fingerprint) {
  return EvalReport{std::move(metric), value, se, samples, seeds_label(seeds), fingerprint};
}

double sw2_of(const StudentMetrics& m) { return m.sw2_data; }
double m2_of(const StudentMetrics& m) { return m.m2.sup; }
double energy_free_of(const StudentMetrics& m) { return m.energy_free.value; }
double energy_guided_of(const StudentMetrics& m) { return m.energy_guided.value; }
double energy_data_of(const StudentMetrics& m) { return m.energy_data.value; }

}  // namespace

std::string seeds_label(const std::vector<std::uint64_t>& seeds) {
  std::string out;
  for (std::size_t i = 0; i < seeds.size(); ++i) out += (i ? ";" : "") + std::to_string(seeds[i]);
  return out;
}

Reference make_reference(const flow::VelocityModel& teacher, const oracle::MixtureSpec& spec,
                         const EvalSettings& settings) {
  if (settings.samples < 2) throw ContractError("make_reference: need at least two samples");
  if (teacher.config().num_classes != spec.num_classes())
    throw ContractError("make_reference: teacher and spec disagree on the number of classes");
  Reference ref;
  Rng rng(settings.seed);
  const int classes = spec.num_classes();
  ref.classes.resize(static_cast<std::size_t>(settings.samples));
  for (int i = 0; i < settings.samples; ++i) ref.classes[static_cast<std::size_t>(i)] = i % classes;
  ref.data = spec.sample(ref.classes, rng);
  ref.x_start = rng.normal(settings.samples, spec.dim);
  ref.teacher_free = sample_field(teacher, settings.teacher_steps, ref, 1.0);
  ref.teacher_guided = sample_field(teacher, settings.teacher_steps, ref, settings.guided_alpha);
  ref.teacher_sw2 = sliced_wasserstein2(ref.teacher_free, ref.data, settings.projections, settings.seed + 1);
  return ref;
}

StudentMetrics evaluate_student(const flow::VelocityField& student, const Reference& ref,
                                const EvalSettings& settings) {
  StudentMetrics m;
  const Mat samples = sample_field(student, settings.student_steps, ref, 1.0);
  m.sw2_data = sliced_wasserstein2(samples, ref.data, settings.projections, settings.seed + 1);
  m.energy_data = energy_subset(samples, ref.data, settings.energy_samples);
  m.energy_free = energy_subset(samples, ref.teacher_free, settings.energy_samples);
  m.energy_guided = energy_subset(samples, ref.teacher_guided, settings.energy_samples);

  const Eigen::Index n = std::min<Eigen::Index>(settings.m2_trajectories, ref.x_start.rows());
  const std::vector<int> c(ref.classes.begin(), ref.classes.begin() + n);
  m.m2 = m2_profile(student, flow::Schedule::fixed(settings.m2_steps), ref.x_start.topRows(n), c,
                    settings.m2_probe);
  return m;
}

void parallel_for(int n, int workers, const std::function<void(int)>& job) {
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(std::max(n, 0)));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        job(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  const int threads = std::max(1, std::min(workers, n));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<CellResult> run_cells(const flow::VelocityModel& teacher, const Reference& ref,
                                  const std::vector<Cell>& cells, const std::vector<std::uint64_t>& seeds,
                                  const EvalSettings& settings) {
  std::vector<CellResult> results(cells.size() * seeds.size());
  parallel_for(static_cast<int>(results.size()), settings.workers, [&](int k) {
    const Cell& cell = cells[static_cast<std::size_t>(k) / seeds.size()];
    const std::uint64_t seed = seeds[static_cast<std::size_t>(k) % seeds.size()];
    CellResult& out = results[static_cast<std::size_t>(k)];
    out.cell = cell.name;
    out.seed = seed;
    distill::DistillConfig config = cell.config;
    config.seed = seed;
    if (!config.use_ca && !config.use_dm && !config.use_cdm) {
      out.metrics = evaluate_student(teacher, ref, settings);
      out.metrics.checksum = teacher.checksum();
      return;
    }
    const distill::DistillResult run = distill::distill(teacher, config);
    out.metrics = evaluate_student(run.student, ref, settings);
    out.metrics.skipped = run.skipped;
    out.metrics.checksum = run.student.checksum();
  });
  return results;
}

std::vector<double> collect(const std::vector<CellResult>& results, const std::string& cell,
                            double (*metric)(const StudentMetrics&)) {
  std::vector<double> out;
  for (const auto& r : results)
    if (r.cell == cell) out.push_back(metric(r.metrics));
  return out;
}

std::string reports_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  out << "metric,value,std_error,samples,seeds,fingerprint\n";
  for (const auto& r : reports)
    out << r.metric << ',' << io::format_double(r.value) << ',' << io::format_double(r.std_error) << ','
        << r.samples << ',' << r.seeds << ',' << r.fingerprint << "\n";
  return out.str();
}

std::string cells_csv(const std::vector<CellResult>& results) {
  std::ostringstream out;
  out << "cell,seed,sw2_data,energy_data,energy_data_se,energy_free,energy_free_se,energy_guided,"
         "energy_guided_se,m2_sup,m2_q50,m2_q90,m2_q99,skipped,checksum\n";
  using io::format_double;
  for (const auto& r : results) {
    const StudentMetrics& m = r.metrics;
    out << r.cell << ',' << r.seed << ',' << format_double(m.sw2_data) << ',' << format_double(m.energy_data.value)
        << ',' << format_double(m.energy_data.std_error) << ',' << format_double(m.energy_free.value) << ','
        << format_double(m.energy_free.std_error) << ',' << format_double(m.energy_guided.value) << ','
        << format_double(m.energy_guided.std_error) << ',' << format_double(m.m2.sup) << ','
        << format_double(m.m2.q50) << ',' << format_double(m.m2.q90) << ',' << format_double(m.m2.q99) << ','
        << m.skipped << ',' << io::hex64(m.checksum) << "\n";
  }
  return out.str();
}

StudyOutput schedule_study(const flow::VelocityModel& teacher, const Reference& ref,
                           const distill::DistillConfig& base, const std::vector<int>& n_max_values,
                           const std::vector<std::uint64_t>& seeds, const EvalSettings& settings,
                           const std::string& fingerprint) {
  std::vector<Cell> cells;
  distill::DistillConfig fixed = base;
  fixed.schedule = flow::ScheduleMode::fixed;
  cells.push_back({"fixed", fixed});
  for (int n : n_max_values) {
    distill::DistillConfig dyn = base;
    dyn.schedule = flow::ScheduleMode::dynamic;
    dyn.n_max = n;
    cells.push_back({"dynamic_nmax" + std::to_string(n), dyn});
  }
  StudyOutput out;
  out.cells = run_cells(teacher, ref, cells, seeds, settings);
  const auto fixed_sw2 = collect(out.cells, "fixed", sw2_of);
  const long samples = settings.samples;
  out.reports.push_back(report("fixed.median_sw2", median(fixed_sw2), 0.0, samples, seeds, fingerprint));
  for (std::size_t k = 1; k < cells.size(); ++k) {
    const auto dyn = collect(out.cells, cells[k].name, sw2_of);
    int wins = 0;
    for (std::size_t s = 0; s < dyn.size(); ++s) wins += dyn[s] <= fixed_sw2[s] ? 1 : 0;
    out.reports.push_back(report(cells[k].name + ".median_sw2", median(dyn), 0.0, samples, seeds, fingerprint));
    out.reports.push_back(report(cells[k].name + ".wins_vs_fixed", wins, 0.0, samples, seeds, fingerprint));
    out.reports.push_back(report(cells[k].name + ".sign_test_p", sign_test_p(wins, static_cast<int>(dyn.size())), 0.0,
                                 samples, seeds, fingerprint));
  }
  return out;
}

StudyOutput cfg_free_study(const flow::VelocityModel& teacher, const Reference& ref,
                           const distill::DistillConfig& base, const std::vector<std::uint64_t>& seeds,
                           const EvalSettings& settings, const std::string& fingerprint) {
  distill::DistillConfig dm = base;
  dm.use_ca = false;
  dm.use_dm = true;
  dm.use_cdm = false;
  StudyOutput out;
  out.cells = run_cells(teacher, ref, {{"dm_only", dm}}, seeds, settings);
  const long samples = settings.energy_samples;
  int closer = 0;
  for (const auto& r : out.cells) {
    const std::string tag = "seed" + std::to_string(r.seed);
    const StudentMetrics& m = r.metrics;
    out.reports.push_back(report(tag + ".energy_to_free", m.energy_free.value, m.energy_free.std_error, samples,
                                 {r.seed}, fingerprint));
    out.reports.push_back(report(tag + ".energy_to_guided", m.energy_guided.value, m.energy_guided.std_error, samples,
                                 {r.seed}, fingerprint));
    const double ratio = m.energy_guided.value > 0.0 ? m.energy_free.value / m.energy_guided.value : 0.0;
    out.reports.push_back(report(tag + ".free_over_guided", ratio, 0.0, samples, {r.seed}, fingerprint));
    closer += m.energy_free.value < m.energy_guided.value ? 1 : 0;
  }
  out.reports.push_back(report("seeds_closer_to_free", closer, 0.0, samples, seeds, fingerprint));
  out.reports.push_back(report("median_energy_to_free", median(collect(out.cells, "dm_only", energy_free_of)), 0.0,
                               samples, seeds, fingerprint));
  out.reports.push_back(report("median_energy_to_guided", median(collect(out.cells, "dm_only", energy_guided_of)),
                               0.0, samples, seeds, fingerprint));
  return out;
}

StudyOutput m2_study(const flow::VelocityModel& teacher, const Reference& ref, const distill::DistillConfig& base,
                     const std::vector<std::uint64_t>& seeds, const EvalSettings& settings,
                     const std::string& fingerprint) {
  distill::DistillConfig full = base;
  full.use_ca = full.use_dm = full.use_cdm = true;
  distill::DistillConfig no_cdm = full;
  no_cdm.use_cdm = false;
  StudyOutput out;
  out.cells = run_cells(teacher, ref, {{"ca_dm_cdm", full}, {"ca_dm", no_cdm}}, seeds, settings);
  const long samples = settings.m2_trajectories;
  const auto with = collect(out.cells, "ca_dm_cdm", m2_of);
  const auto without = collect(out.cells, "ca_dm", m2_of);
  out.reports.push_back(report("ca_dm_cdm.median_m2_sup", median(with), 0.0, samples, seeds, fingerprint));
  out.reports.push_back(report("ca_dm.median_m2_sup", median(without), 0.0, samples, seeds, fingerprint));
  return out;
}

std::vector<Cell> ablation_cells(const distill::DistillConfig& base) {
  auto with = [&](bool ca, bool dm, bool cdm) {
    distill::DistillConfig c = base;
    c.use_ca = ca;
    c.use_dm = dm;
    c.use_cdm = cdm;
    return c;
  };
  std::vector<Cell> cells = {
      {"full", with(true, true, true)},      {"no_ca", with(false, true, true)},
      {"no_dm", with(true, false, true)},    {"no_cdm", with(true, true, false)},
      {"ca_only", with(true, false, false)}, {"dm_only", with(false, true, false)},
      {"cdm_only", with(false, false, true)}, {"all_off", with(false, false, false)},
  };
  distill::DistillConfig c = with(true, true, true);
  c.schedule = flow::ScheduleMode::fixed;
  cells.push_back({"fixed_schedule", c});
  c = with(true, true, true);
  c.cdm.perturbation = distill::Perturbation::gaussian;
  cells.push_back({"gaussian_perturb", c});
  c = with(true, true, true);
  c.cdm.perturbation = distill::Perturbation::none;
  cells.push_back({"on_traj", c});
  c = with(true, true, true);
  c.cdm.target = distill::CdmTarget::full_trajectory;
  cells.push_back({"full_traj_target", c});
  return cells;
}

StudyOutput ablation_grid(const flow::VelocityModel& teacher, const Reference& ref, const std::vector<Cell>& cells,
                          const std::vector<std::uint64_t>& seeds, const EvalSettings& settings,
                          const std::string& fingerprint) {
  StudyOutput out;
  out.cells = run_cells(teacher, ref, cells, seeds, settings);
  const long samples = settings.samples;
  for (const auto& cell : cells) {
    out.reports.push_back(
        report(cell.name + ".median_sw2", median(collect(out.cells, cell.name, sw2_of)), 0.0, samples, seeds, fingerprint));
    out.reports.push_back(report(cell.name + ".median_energy", median(collect(out.cells, cell.name, energy_data_of)),
                                 0.0, settings.energy_samples, seeds, fingerprint));
    out.reports.push_back(report(cell.name + ".median_m2_sup", median(collect(out.cells, cell.name, m2_of)), 0.0,
                                 settings.m2_trajectories, seeds, fingerprint));
  }
  return out;
}

}  // namespace cdm::eval
