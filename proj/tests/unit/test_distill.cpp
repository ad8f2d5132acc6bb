#include <doctest.h>

#include <cmath>
#include <limits>

#include "cdm/distill/losses.hpp"
#include "cdm/distill/trainer.hpp"
#include "cdm/error.hpp"
#include "cdm/flow/field.hpp"
#include "cdm/oracle/gaussian_flow.hpp"
#include "cdm/oracle/mixture.hpp"
#include "support/stats.hpp"

using namespace cdm;
using namespace cdm::distill;

namespace {

flow::VelocityModel small_model(std::uint64_t seed = 1) {
  flow::ModelConfig cfg;
  cfg.dim = 2;
  cfg.num_classes = 2;
  cfg.hidden = 16;
  cfg.depth = 2;
  cfg.time_features = 8;
  cfg.cond_features = 4;
  Rng rng(seed);
  return flow::VelocityModel(cfg, rng);
}

DistillConfig small_config() {
  DistillConfig cfg;
  cfg.batch = 8;
  cfg.n_max = 4;
  cfg.iterations = 3;
  cfg.student_lr = 1e-3;
  cfg.fake_lr = 1e-3;
  cfg.alpha = 3.0;
  return cfg;
}

Mat column(Rng& rng, int n, double lo = 0.05, double hi = 0.95) {
  Mat t(n, 1);
  for (int i = 0; i < n; ++i) t(i, 0) = rng.uniform(lo, hi);
  return t;
}

bool all_grads_zero(const flow::VelocityModel& m) {
  for (const auto& p : m.parameters())
    if (!p.grad().isZero(0.0)) return false;
  return true;
}

}  // namespace

TEST_CASE("weight factor") {
  const Mat a = Mat::Zero(2, 3);
  Mat b = Mat::Constant(2, 3, 2.0);
  b(1, 0) = -2.0;
  const Vec w = weight_factor(a, b);
  CHECK(w(0) == 0.5);
  CHECK(w(1) == 0.5);
  CHECK(weight_factor(a, a)(0) == 1e4);
  CHECK(weight_factor(a, Mat::Constant(2, 3, 1e6))(0) == 1e-4);
  const WeightClamp narrow{0.1, 10.0};
  CHECK(weight_factor(a, a, narrow)(0) == 10.0);
}

TEST_CASE("losses are non-negative and never touch the teachers") {
  const auto real = small_model(1);
  const auto fake = small_model(2);
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 6;
    const std::vector<int> c{0, 1, 0, 1, 0, 1};
    const ad::Tensor x = ad::Tensor::parameter(rng.normal(n, 2));
    const Mat tau = column(rng, n), eps = rng.normal(n, 2);

    const auto ca = ca_loss(real, x, tau, eps, c, 3.0);
    const auto dm = dm_loss(real, fake, x, tau, eps, c);
    CHECK(ca.loss.item() >= 0.0);
    CHECK(dm.loss.item() >= 0.0);
    ad::backward(ad::add(ca.loss, dm.loss));
    CHECK(all_grads_zero(real));
    CHECK(all_grads_zero(fake));
    CHECK_FALSE(x.grad().isZero(0.0));

    const auto student = small_model(4);
    CdmInputs in;
    in.x_anchor = rng.normal(n, 2);
    in.t_anchor = 0.7;
    in.t_prime = column(rng, n);
    in.tau = column(rng, n);
    in.eps = rng.normal(n, 2);
    const auto cdm = cdm_loss(student, real, fake, in, c);
    CHECK(cdm.term.loss.item() >= 0.0);
    ad::backward(cdm.term.loss);
    CHECK(all_grads_zero(real));
    CHECK(all_grads_zero(fake));
  }
}

TEST_CASE("loss value is half the mean squared step") {
  const auto real = small_model(1);
  const auto fake = small_model(2);
  Rng rng(4);
  const std::vector<int> c{0, 1, 1};
  const Mat x0 = rng.normal(3, 2);
  const Mat tau = column(rng, 3), eps = rng.normal(3, 2);
  const auto dm = dm_loss(real, fake, ad::Tensor::parameter(x0), tau, eps, c);
  // Independent recomputation from the data predictions.
  const Mat z = flow::interpolate(x0, eps, tau);
  const Mat d_real = flow::data_prediction(real, z, tau, c);
  const Mat diff = d_real - flow::data_prediction(fake, z, tau, c);
  double expected = 0.0;
  for (int i = 0; i < 3; ++i) {
    // w compares the real teacher's prediction with the student's.
    const double w = std::clamp(1.0 / (d_real.row(i) - x0.row(i)).cwiseAbs().mean(), 1e-4, 1e4);
    expected += 0.5 * w * w * diff.row(i).squaredNorm();
  }
  expected /= 3;
  CHECK(dm.loss.item() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("CA vanishes at alpha zero and when branches agree") {
  const auto real = small_model(1);
  Rng rng(5);
  const std::vector<int> c{0, 1, 0, 1};
  const Mat tau = column(rng, 4), eps = rng.normal(4, 2);
  {
    const ad::Tensor x = ad::Tensor::parameter(rng.normal(4, 2));
    const auto r = ca_loss(real, x, tau, eps, c, 0.0);
    CHECK(r.loss.item() == 0.0);
    ad::backward(r.loss);
    CHECK(x.grad().isZero(0.0));
  }
  {
    // A condition-blind field: conditional and unconditional predictions coincide.
    const oracle::AffineField blind(RowVec::Constant(2, 0.3), RowVec::Constant(2, -1.0));
    const ad::Tensor x = ad::Tensor::parameter(rng.normal(4, 2));
    const auto r = ca_loss(blind, x, tau, eps, c, 7.0);
    CHECK(r.loss.item() == 0.0);
    ad::backward(r.loss);
    CHECK(x.grad().isZero(0.0));
  }
}

TEST_CASE("DM and CDM vanish when fake equals real") {
  const auto real = small_model(1);
  const auto fake = real.clone();
  const auto student = small_model(3);
  Rng rng(6);
  const std::vector<int> c{0, 1, 0};
  const ad::Tensor x = ad::Tensor::parameter(rng.normal(3, 2));
  const auto dm = dm_loss(real, fake, x, column(rng, 3), rng.normal(3, 2), c);
  CHECK(dm.loss.item() == 0.0);
  ad::backward(dm.loss);
  CHECK(x.grad().isZero(0.0));

  CdmInputs in;
  in.x_anchor = rng.normal(3, 2);
  in.t_anchor = 0.8;
  in.t_prime = column(rng, 3);
  in.tau = column(rng, 3);
  in.eps = rng.normal(3, 2);
  const auto cdm = cdm_loss(student, real, fake, in, c);
  CHECK(cdm.term.loss.item() == 0.0);
  ad::backward(cdm.term.loss);
  CHECK(all_grads_zero(student));
}

TEST_CASE("CDM extrapolates along the student velocity") {
  const auto real = small_model(1);
  const auto fake = small_model(2);
  Rng rng(7);
  const std::vector<int> c{0, 1};
  CdmInputs in;
  in.x_anchor = rng.normal(2, 2);
  in.t_anchor = 0.6;
  in.t_prime = column(rng, 2);
  in.tau = column(rng, 2);
  in.eps = rng.normal(2, 2);

  SUBCASE("zero-velocity student stays put") {
    const oracle::AffineField still(RowVec::Zero(2), RowVec::Zero(2));
    const auto r = cdm_loss(still, real, fake, in, c);
    CHECK(r.x_prime == in.x_anchor);
  }
  SUBCASE("constant-velocity student") {
    const oracle::AffineField drift(RowVec::Constant(2, 2.0), RowVec::Zero(2));
    const auto r = cdm_loss(drift, real, fake, in, c);
    for (int i = 0; i < 2; ++i)
      CHECK((r.x_prime.row(i) - in.x_anchor.row(i)).cwiseAbs().maxCoeff() ==
            doctest::Approx(std::abs(2.0 * (in.t_prime(i, 0) - 0.6))));
    CHECK(r.t_used == in.t_prime);
  }
  SUBCASE("on-trajectory option") {
    const auto student = small_model(3);
    CdmOptions opt;
    opt.perturbation = Perturbation::none;
    const auto r = cdm_loss(student, real, fake, in, c, opt);
    CHECK(r.x_prime == in.x_anchor);
    CHECK((r.t_used.array() == 0.6).all());
  }
}

TEST_CASE("zero stride reduces CDM to DM at the anchor") {
  const auto real = small_model(1);
  const auto fake = small_model(2);
  const auto student = small_model(3);
  Rng rng(8);
  const std::vector<int> c{0, 1, 1, 0};
  CdmInputs in;
  in.x_anchor = rng.normal(4, 2);
  in.t_anchor = 0.55;
  in.t_prime = flow::time_column(4, 0.55);
  in.tau = column(rng, 4);
  in.eps = rng.normal(4, 2);
  const auto cdm = cdm_loss(student, real, fake, in, c);
  ad::backward(cdm.term.loss);
  std::vector<Mat> g1;
  for (const auto& p : student.parameters()) g1.push_back(p.grad());

  auto student2 = student.clone();
  const ad::Tensor pred = flow::data_prediction(student2, ad::Tensor::constant(in.x_anchor), in.t_prime, c);
  const auto dm = dm_loss(real, fake, pred, in.tau, in.eps, c);
  CHECK(dm.loss.item() == cdm.term.loss.item());
  ad::backward(dm.loss);
  const auto params = student2.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) CHECK(params[k].grad() == g1[k]);
}

TEST_CASE("iteration draws follow their uniforms") {
  DistillConfig cfg;
  cfg.batch = 1;
  cfg.n_max = 6;
  cfg.ttur = 2;
  Rng rng(9);
  std::vector<double> tau_ca, tau_dm, t_prime, tau_cdm, tau_fake, t_anchor;
  std::vector<long> anchor_counts(4, 0);
  DistillConfig fixed = cfg;
  fixed.schedule = flow::ScheduleMode::fixed;
  fixed.fixed_steps = 4;
  for (int i = 0; i < 100000; ++i) {
    const auto d = draw_iteration(cfg, 2, 3, rng);
    tau_ca.push_back(d.tau_ca(0, 0));
    tau_dm.push_back(d.tau_dm(0, 0));
    t_prime.push_back(d.t_prime(0, 0));
    tau_cdm.push_back(d.tau_cdm(0, 0));
    tau_fake.push_back(d.fake[1].tau(0, 0));
    // A uniformly chosen interior point of i.i.d. uniforms is itself uniform.
    if (d.anchor > 0) t_anchor.push_back(d.schedule[d.anchor]);
    ++anchor_counts[static_cast<std::size_t>(draw_iteration(fixed, 2, 3, rng).anchor)];
  }
  const double lo = flow::kDefaultTimeFloor;
  CHECK(testing::ks_uniform_p(tau_ca, lo, 1.0) > 0.01);
  CHECK(testing::ks_uniform_p(tau_dm, lo, 1.0) > 0.01);
  CHECK(testing::ks_uniform_p(t_prime, lo, 1.0) > 0.01);
  CHECK(testing::ks_uniform_p(tau_cdm, lo, 1.0) > 0.01);
  CHECK(testing::ks_uniform_p(tau_fake, lo, 1.0) > 0.01);
  CHECK(testing::ks_uniform_p(t_anchor, lo, 1.0) > 0.01);
  CHECK(testing::chi_square_uniform_p(anchor_counts) > 0.01);
}

TEST_CASE("backward simulation with one step returns the noise") {
  const auto student = small_model(1);
  Rng rng(10);
  const Mat x = rng.normal(3, 2);
  const std::vector<int> c{0, 1, 0};
  const auto sim = backward_simulate(student, flow::Schedule({1.0}), x, c, 0, false);
  CHECK(sim.x_anchor == x);
  CHECK(sim.t_anchor == 1.0);
  CHECK_THROWS_AS(backward_simulate(student, flow::Schedule({1.0}), x, c, 1, false), ContractError);
}

TEST_CASE("all switches off leaves the student unchanged") {
  const auto teacher = small_model(1);
  auto cfg = small_config();
  cfg.use_ca = cfg.use_dm = cfg.use_cdm = false;
  Distiller d(teacher, cfg);
  for (int i = 0; i < 3; ++i) {
    const auto terms = d.train_step();
    CHECK(terms.total == 0.0);
  }
  CHECK(d.student().checksum() == teacher.checksum());
}

TEST_CASE("switched-off terms contribute exactly zero") {
  const auto teacher = small_model(1);
  auto cfg = small_config();
  cfg.use_dm = false;
  Distiller d(teacher, cfg);
  const auto terms = d.train_step();
  CHECK(terms.dm == 0.0);
  CHECK(terms.total == terms.ca + terms.cdm);

  auto all = small_config();
  Distiller full(teacher, all);
  const auto t = full.train_step();
  CHECK(t.total == doctest::Approx(t.ca + t.dm + t.cdm).epsilon(1e-15));
}

TEST_CASE("trainer bookkeeping") {
  const auto teacher = small_model(1);
  auto cfg = small_config();
  cfg.ttur = 3;
  Distiller d(teacher, cfg);
  const auto before = teacher.checksum();
  for (int i = 0; i < 4; ++i) d.train_step();
  CHECK(d.fake_updates() == 12);
  CHECK(d.student_updates() == 4);
  CHECK(d.iteration() == 4);
  CHECK(d.teacher().checksum() == before);
  CHECK(d.student().checksum() != before);
}

TEST_CASE("training is deterministic") {
  const auto teacher = small_model(1);
  const auto cfg = small_config();
  Distiller a(teacher, cfg), b(teacher, cfg);
  for (int i = 0; i < 3; ++i) {
    const auto ta = a.train_step(), tb = b.train_step();
    CHECK(ta.ca == tb.ca);
    CHECK(ta.dm == tb.dm);
    CHECK(ta.cdm == tb.cdm);
    CHECK(ta.fake_loss == tb.fake_loss);
    CHECK(ta.anchor == tb.anchor);
    CHECK(ta.stride == tb.stride);
  }
  CHECK(a.student().checksum() == b.student().checksum());
  CHECK(a.fake().checksum() == b.fake().checksum());
}

TEST_CASE("zero iterations yields a teacher copy") {
  const auto teacher = small_model(1);
  auto cfg = small_config();
  cfg.iterations = 0;
  const auto result = distill::distill(teacher, cfg);
  CHECK(result.student.checksum() == teacher.checksum());
  CHECK(result.fake.checksum() == teacher.checksum());
  CHECK(result.history.empty());
}

TEST_CASE("non-finite losses skip the update") {
  const auto teacher = small_model(1);
  const auto cfg = small_config();
  Distiller d(teacher, cfg);
  auto draws = draw_iteration(cfg, 2, 2, d.rng());
  draws.eps_dm(0, 0) = std::numeric_limits<double>::quiet_NaN();
  const auto terms = d.train_step(draws);
  CHECK(terms.skipped);
  CHECK_FALSE(terms.skip_reason.empty());
  CHECK(d.skipped() == 1);
  CHECK(d.student().checksum() == teacher.checksum());
}

TEST_CASE("fake teacher update returns the pre-step loss and learns") {
  auto fake = small_model(1);
  ad::AdamWConfig oc;
  oc.lr = 3e-3;
  oc.weight_decay = 0.0;
  ad::AdamW opt(oc);
  Rng rng(11);
  const Mat x0 = Mat::Constant(64, 2, 1.0);  // point mass
  const std::vector<int> c(64, 0);
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 400; ++i) {
    FakeDraw draw{column(rng, 64, 0.01, 1.0), rng.normal(64, 2)};
    const double expected = flow::flow_matching_loss(fake, x0, draw.tau, draw.eps, c).item();
    const double got = update_fake_teacher(fake, opt, x0, draw, c);
    CHECK(got == expected);
    if (i == 0) first = got;
    last = got;
  }
  CHECK(last < 0.2 * first);
}

TEST_CASE("config validation and metrics") {
  DistillConfig cfg;
  CHECK(cfg.student_lr == 1e-5);
  CHECK(cfg.fake_lr == 5e-6);
  CHECK(cfg.ttur == 2);
  CHECK(cfg.n_max == 28);
  CHECK(cfg.alpha == 7.0);
  CHECK_NOTHROW(cfg.validate());
  cfg.alpha = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg = {};
  cfg.n_max = 0;
  CHECK_THROWS_AS(cfg.validate(), ContractError);

  LossTerms t;
  t.ca = 1.5;
  const std::string csv = metrics_csv({t, t});
  CHECK(csv.rfind(std::string(kMetricsHeader) + "\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}
