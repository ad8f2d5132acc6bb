#pragma once

#include <span>
#include <vector>

#include "cdm/flow/field.hpp"
#include "cdm/flow/schedule.hpp"

namespace cdm::flow {

struct Trajectory {
  std::vector<double> times;  // t_1..t_N
  std::vector<Mat> states;    // x_{t_1}..x_{t_N}
  Mat final_sample;           // data prediction at t_N
};

// Explicit Euler on the probability-flow ODE along the schedule, followed by
// a one-step clean-data readout x - t_N v at the last time. Uses exactly N
// field evaluations (per guidance branch). Throws SamplingError on a
// non-finite state.
Trajectory euler_sample(const VelocityField& field, const Schedule& schedule, Mat x_start,
                        std::span<const int> c, const GuidanceConfig& guidance = {});

// Same, drawing x_{t_1} ~ N(0, I) with one row per condition.
Trajectory euler_sample(const VelocityField& field, const Schedule& schedule, std::span<const int> c,
                        const GuidanceConfig& guidance, Rng& rng);

}  // namespace cdm::flow
