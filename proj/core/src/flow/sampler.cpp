#include "cdm/flow/sampler.hpp"

#include "cdm/error.hpp"

namespace cdm::flow {

Trajectory euler_sample(const VelocityField& field, const Schedule& schedule, Mat x_start,
                        std::span<const int> c, const GuidanceConfig& guidance) {
  if (x_start.cols() != field.dim() || static_cast<std::size_t>(x_start.rows()) != c.size())
    throw DimensionError("euler_sample: start state does not match field dimension or condition count");
  Trajectory traj;
  traj.times = schedule.times();
  traj.states.reserve(static_cast<std::size_t>(schedule.size()));
  traj.states.push_back(std::move(x_start));
  const Eigen::Index rows = traj.states.front().rows();
  for (int j = 0; j < schedule.size(); ++j) {
    const Mat& x = traj.states.back();
    const Mat t = time_column(rows, schedule[j]);
    const Mat v = guided_velocity(field, x, t, c, guidance);
    if (!v.allFinite()) throw SamplingError("euler_sample: non-finite velocity", j);
    if (j + 1 < schedule.size()) {
      const double h = schedule[j] - schedule[j + 1];
      Mat next = x - h * v;
      if (!next.allFinite()) throw SamplingError("euler_sample: non-finite state", j + 1);
      traj.states.push_back(std::move(next));
    } else {
      traj.final_sample = x - schedule[j] * v;
      if (!traj.final_sample.allFinite()) throw SamplingError("euler_sample: non-finite readout", j);
    }
  }
  return traj;
}

Trajectory euler_sample(const VelocityField& field, const Schedule& schedule, std::span<const int> c,
                        const GuidanceConfig& guidance, Rng& rng) {
  Mat x = rng.normal(static_cast<Eigen::Index>(c.size()), field.dim());
  return euler_sample(field, schedule, std::move(x), c, guidance);
}

}  // namespace cdm::flow
