#pragma once

#include <string_view>
#include <vector>

#include "cdm/flow/field.hpp"
#include "cdm/rng.hpp"

namespace cdm::flow {

// Strictly decreasing times 1 = t_1 > t_2 > ... > t_N > floor.
class Schedule {
 public:
  // Validates the invariants; throws ContractError.
  explicit Schedule(std::vector<double> times, double floor = kDefaultTimeFloor);

  // Uniform grid t_j = 1 - (j - 1) / n, j = 1..n.
  static Schedule fixed(int n, double floor = kDefaultTimeFloor);
  // Uniform grid from 1 down to `last` inclusive with n points (n >= 2), or
  // [1] for n = 1.
  static Schedule uniform_to(int n, double last, double floor = kDefaultTimeFloor);
  // N ~ U{1..n_max}; N - 1 interior points i.i.d. uniform on (floor, 1),
  // sorted descending. Draws violating the minimum gap between neighbours
  // (including the endpoints 1 and floor) are redrawn.
  static Schedule dynamic(int n_max, Rng& rng, double floor = kDefaultTimeFloor,
                          double min_gap = kMinGap);

  static constexpr double kMinGap = 1e-3;

  int size() const { return static_cast<int>(times_.size()); }
  double operator[](int j) const { return times_[static_cast<std::size_t>(j)]; }
  double back() const { return times_.back(); }
  // h_j = t_j - t_{j+1}, size N - 1.
  std::vector<double> steps() const;
  const std::vector<double>& times() const { return times_; }
  double floor() const { return floor_; }

 private:
  std::vector<double> times_;
  double floor_;
};

enum class ScheduleMode { dynamic, fixed };
ScheduleMode parse_schedule_mode(std::string_view s);
std::string_view to_string(ScheduleMode m);

}  // namespace cdm::flow
