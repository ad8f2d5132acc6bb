#include <benchmark/benchmark.h>

#include <vector>

#include "cdm/ad/tensor.hpp"
#include "cdm/distill/trainer.hpp"
#include "cdm/eval/metrics.hpp"
#include "cdm/flow/sampler.hpp"
#include "cdm/flow/schedule.hpp"
#include "cdm/flow/velocity_model.hpp"

using namespace cdm;

namespace {

flow::ModelConfig ring_model() {
  flow::ModelConfig mc;
  mc.num_classes = 2;
  return mc;
}

Mat times(Eigen::Index rows, double t) { return Mat::Constant(rows, 1, t); }

}  // namespace

static void BM_Matmul(benchmark::State& state) {
  const auto n = state.range(0);
  Rng rng(0);
  const auto a = ad::Tensor::parameter(rng.normal(n, n));
  const auto b = ad::Tensor::parameter(rng.normal(n, n));
  for (auto _ : state) {
    auto y = ad::sum(ad::matmul(a, b));
    ad::backward(y);
    benchmark::DoNotOptimize(a.grad().data());
  }
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

static void BM_VelocityForward(benchmark::State& state) {
  Rng rng(1);
  const flow::VelocityModel model(ring_model(), rng);
  const auto rows = state.range(0);
  const Mat x = rng.normal(rows, 2);
  const std::vector<int> c(static_cast<std::size_t>(rows), 0);
  for (auto _ : state) benchmark::DoNotOptimize(model.velocity(x, times(rows, 0.5), c));
}
BENCHMARK(BM_VelocityForward)->Arg(64)->Arg(1024);

static void BM_VelocityBackward(benchmark::State& state) {
  Rng rng(2);
  flow::VelocityModel model(ring_model(), rng);
  const auto rows = state.range(0);
  const auto x = ad::Tensor::constant(rng.normal(rows, 2));
  const std::vector<int> c(static_cast<std::size_t>(rows), 1);
  for (auto _ : state) {
    model.zero_grad();
    ad::backward(ad::mean(ad::square(model.velocity(x, times(rows, 0.3), c))));
  }
}
BENCHMARK(BM_VelocityBackward)->Arg(64)->Arg(1024);

static void BM_EulerSample(benchmark::State& state) {
  Rng rng(3);
  const flow::VelocityModel model(ring_model(), rng);
  const auto schedule = flow::Schedule::fixed(static_cast<int>(state.range(0)));
  const Mat x = rng.normal(512, 2);
  const std::vector<int> c(512, 0);
  for (auto _ : state) benchmark::DoNotOptimize(flow::euler_sample(model, schedule, x, c));
}
BENCHMARK(BM_EulerSample)->Arg(4)->Arg(128);

static void BM_DistillStep(benchmark::State& state) {
  Rng rng(4);
  const flow::VelocityModel teacher(ring_model(), rng);
  distill::DistillConfig config;
  config.batch = static_cast<int>(state.range(0));
  config.n_max = 8;
  distill::Distiller distiller(teacher, config);
  for (auto _ : state) benchmark::DoNotOptimize(distiller.train_step());
}
BENCHMARK(BM_DistillStep)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_EnergyDistance(benchmark::State& state) {
  Rng rng(5);
  const Mat a = rng.normal(state.range(0), 2), b = rng.normal(state.range(0), 2);
  for (auto _ : state) benchmark::DoNotOptimize(eval::energy_distance(a, b));
}
BENCHMARK(BM_EnergyDistance)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
