#include "cdm/distill/trainer.hpp"

#include <cmath>
#include <sstream>

#include "cdm/error.hpp"
#include "cdm/flow/sampler.hpp"
#include "cdm/io/keyvalue.hpp"

namespace cdm::distill {
namespace {

Mat draw_times(Eigen::Index rows, double floor, Rng& rng) {
  Mat t(rows, 1);
  for (Eigen::Index i = 0; i < rows; ++i) t(i, 0) = rng.uniform_left_open(floor, 1.0);
  return t;
}

bool grads_finite(const std::vector<ad::Tensor>& params) {
  for (const auto& p : params)
    if (p.has_grad() && !p.node()->grad.allFinite()) return false;
  return true;
}

void clear_grads(std::vector<ad::Tensor>& params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace

void DistillConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ContractError("distill config: " + msg); };
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) fail("alpha must be a finite value >= 0");
  if (n_max < 1 || n_max > 1000) fail("n_max must be in [1, 1000]");
  if (ttur < 0 || ttur > 100) fail("ttur must be in [0, 100]");
  if (!(student_lr >= 0.0) || !(fake_lr >= 0.0)) fail("learning rates must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("betas must be in [0, 1)");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
  if (fixed_steps < 1 || fixed_steps > 1000) fail("fixed_steps must be in [1, 1000]");
  if (batch < 1) fail("batch must be >= 1");
  if (iterations < 0) fail("iterations must be >= 0");
  if (!(time_floor > 0.0 && time_floor < 1.0)) fail("time_floor must be in (0, 1)");
  if (!(clamp.min > 0.0 && clamp.min <= clamp.max)) fail("weight clamp must satisfy 0 < min <= max");
}

IterationDraws draw_iteration(const DistillConfig& config, int dim, int num_classes, Rng& rng) {
  IterationDraws d;
  const int b = config.batch;
  d.classes.resize(static_cast<std::size_t>(b));
  for (auto& c : d.classes) c = rng.uniform_int(0, num_classes - 1);
  d.schedule = config.schedule == flow::ScheduleMode::dynamic
                   ? flow::Schedule::dynamic(config.n_max, rng, config.time_floor)
                   : flow::Schedule::fixed(config.fixed_steps, config.time_floor);
  d.x_start = rng.normal(b, dim);
  d.anchor = rng.uniform_int(0, d.schedule.size() - 1);
  for (int k = 0; k < config.ttur; ++k) {
    FakeDraw f;
    f.tau = draw_times(b, config.time_floor, rng);
    f.eps = rng.normal(b, dim);
    d.fake.push_back(std::move(f));
  }
  d.tau_ca = draw_times(b, config.time_floor, rng);
  d.eps_ca = rng.normal(b, dim);
  d.tau_dm = draw_times(b, config.time_floor, rng);
  d.eps_dm = rng.normal(b, dim);
  d.t_prime = draw_times(b, config.time_floor, rng);
  d.tau_cdm = draw_times(b, config.time_floor, rng);
  d.eps_cdm = rng.normal(b, dim);
  d.eps_perturb = rng.normal(b, dim);
  return d;
}

Simulation backward_simulate(const flow::VelocityField& student, const flow::Schedule& schedule, const Mat& x_start,
                             std::span<const int> c, int anchor, bool want_final) {
  if (anchor < 0 || anchor >= schedule.size())
    throw ContractError("backward_simulate: anchor " + std::to_string(anchor) + " outside schedule of length " +
                        std::to_string(schedule.size()));
  ad::NoGradGuard guard;
  Simulation sim;
  if (want_final) {
    const flow::Trajectory traj = flow::euler_sample(student, schedule, x_start, c);
    sim.x_anchor = traj.states[static_cast<std::size_t>(anchor)];
    sim.final_sample = traj.final_sample;
  } else {
    Mat x = x_start;
    for (int j = 0; j < anchor; ++j) {
      const Mat v = student.velocity(x, flow::time_column(x.rows(), schedule[j]), c);
      x -= (schedule[j] - schedule[j + 1]) * v;
      if (!x.allFinite()) throw SamplingError("backward_simulate: non-finite state", j + 1);
    }
    sim.x_anchor = std::move(x);
  }
  sim.t_anchor = schedule[anchor];
  return sim;
}

double update_fake_teacher(flow::VelocityModel& fake, ad::AdamW& opt, const Mat& x_hat0, const FakeDraw& draw,
                           std::span<const int> c) {
  const ad::Tensor loss = flow::flow_matching_loss(fake, x_hat0, draw.tau, draw.eps, c);
  const double value = loss.item();
  if (!std::isfinite(value)) throw TrainingError("fake teacher: non-finite loss, training aborted");
  ad::backward(loss);
  auto params = fake.parameters();
  opt.step(params);
  return value;
}

Distiller::Distiller(const flow::VelocityModel& teacher, DistillConfig config)
    : config_(config),
      teacher_(teacher.clone()),
      student_(teacher.clone()),
      fake_(teacher.clone()),
      student_opt_(ad::AdamWConfig{config.student_lr, config.beta1, config.beta2, config.weight_decay, 1e-8}),
      fake_opt_(ad::AdamWConfig{config.fake_lr, config.beta1, config.beta2, config.weight_decay, 1e-8}),
      rng_(config.seed) {
  config_.validate();
}

LossTerms Distiller::train_step() {
  const IterationDraws draws = draw_iteration(config_, student_.dim(), student_.config().num_classes, rng_);
  return train_step(draws);
}

LossTerms Distiller::train_step(const IterationDraws& draws) {
  ++iteration_;
  LossTerms terms;
  terms.n_steps = draws.schedule.size();
  terms.anchor = draws.anchor;
  terms.tau_ca = draws.tau_ca;
  terms.tau_dm = draws.tau_dm;
  terms.t_prime = draws.t_prime;
  terms.tau_cdm = draws.tau_cdm;
  const std::span<const int> c = draws.classes;
  const Eigen::Index b = static_cast<Eigen::Index>(c.size());

  auto skip = [&](std::string reason) {
    auto params = student_.parameters();
    clear_grads(params);
    ++skipped_;
    terms.skipped = true;
    terms.skip_reason = std::move(reason);
    return terms;
  };

  Simulation sim;
  try {
    sim = backward_simulate(student_, draws.schedule, draws.x_start, c, draws.anchor,
                            config_.use_cdm && config_.cdm.target == CdmTarget::full_trajectory);
  } catch (const SamplingError& err) {
    return skip(err.what());
  }
  terms.t_anchor = sim.t_anchor;
  terms.stride = (draws.t_prime.array() - sim.t_anchor).abs().mean();

  const Mat t_anchor = flow::time_column(b, sim.t_anchor);
  const ad::Tensor x_hat0 =
      flow::data_prediction(student_, ad::Tensor::constant(sim.x_anchor), t_anchor, c, config_.time_floor);
  if (!x_hat0.value().allFinite()) return skip("non-finite student prediction");

  double fake_total = 0.0;
  for (const FakeDraw& f : draws.fake) fake_total += update_fake_teacher(fake_, fake_opt_, x_hat0.value(), f, c);
  terms.fake_loss = draws.fake.empty() ? 0.0 : fake_total / static_cast<double>(draws.fake.size());

  std::vector<ad::Tensor> parts;
  if (config_.use_ca) {
    const TermResult r =
        ca_loss(teacher_, x_hat0, draws.tau_ca, draws.eps_ca, c, config_.alpha, config_.clamp, config_.time_floor);
    terms.ca = r.loss.item();
    terms.w_ca = r.w.mean();
    terms.w_clamped += r.clamped;
    parts.push_back(r.loss);
  }
  if (config_.use_dm) {
    const TermResult r =
        dm_loss(teacher_, fake_, x_hat0, draws.tau_dm, draws.eps_dm, c, config_.clamp, config_.time_floor);
    terms.dm = r.loss.item();
    terms.w_dm = r.w.mean();
    terms.w_clamped += r.clamped;
    parts.push_back(r.loss);
  }
  if (config_.use_cdm) {
    CdmInputs in;
    in.x_anchor = sim.x_anchor;
    in.t_anchor = sim.t_anchor;
    in.t_prime = draws.t_prime;
    in.tau = draws.tau_cdm;
    in.eps = draws.eps_cdm;
    in.eps_perturb = draws.eps_perturb;
    in.x_hat0_anchor = x_hat0.value();
    in.full_trajectory = sim.final_sample;
    const CdmResult r = cdm_loss(student_, teacher_, fake_, in, c, config_.cdm, config_.clamp, config_.time_floor);
    terms.cdm = r.term.loss.item();
    terms.w_cdm = r.term.w.mean();
    terms.w_clamped += r.term.clamped;
    parts.push_back(r.term.loss);
  }
  if (parts.empty()) return terms;

  ad::Tensor total = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) total = ad::add(total, parts[i]);
  terms.total = total.item();
  if (!std::isfinite(terms.total)) return skip("non-finite loss");

  ad::backward(total);
  auto params = student_.parameters();
  if (!grads_finite(params)) return skip("non-finite student gradient");
  student_opt_.step(params);
  return terms;
}

DistillResult distill(const flow::VelocityModel& teacher, const DistillConfig& config,
                      const std::function<void(long, const LossTerms&, const Distiller&)>& on_step) {
  Distiller d(teacher, config);
  std::vector<LossTerms> history;
  history.reserve(static_cast<std::size_t>(config.iterations));
  for (long it = 0; it < config.iterations; ++it) {
    LossTerms terms = d.train_step();
    if (on_step) on_step(it, terms, d);
    history.push_back(std::move(terms));
  }
  return DistillResult{d.student().clone(), d.fake().clone(), std::move(history), d.skipped()};
}

std::string metrics_csv(const std::vector<LossTerms>& history, const std::vector<double>& wall_times) {
  if (!wall_times.empty() && wall_times.size() != history.size())
    throw ContractError("metrics_csv: one wall time per row required");
  std::ostringstream out;
  out << kMetricsHeader << "\n";
  using io::format_double;
  for (std::size_t i = 0; i < history.size(); ++i) {
    const LossTerms& t = history[i];
    out << i << ',' << format_double(t.ca) << ',' << format_double(t.dm) << ',' << format_double(t.cdm) << ','
        << format_double(t.total) << ',' << format_double(t.fake_loss) << ',' << format_double(t.w_ca) << ','
        << format_double(t.w_dm) << ',' << format_double(t.w_cdm) << ',' << t.w_clamped << ',' << t.n_steps << ','
        << t.anchor << ',' << format_double(t.t_anchor) << ',' << format_double(t.stride) << ','
        << (t.skipped ? 1 : 0) << ',' << format_double(wall_times.empty() ? 0.0 : wall_times[i]) << "\n";
  }
  return out.str();
}

}  // namespace cdm::distill
