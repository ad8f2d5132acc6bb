#include "cdm/flow/schedule.hpp"

#include <algorithm>
#include <functional>
#include <string>

#include "cdm/error.hpp"

namespace cdm::flow {

Schedule::Schedule(std::vector<double> times, double floor) : times_(std::move(times)), floor_(floor) {
  if (times_.empty()) throw ContractError("Schedule: empty");
  if (times_.front() != 1.0) throw ContractError("Schedule: first time must be exactly 1");
  for (std::size_t j = 0; j < times_.size(); ++j) {
    if (!(times_[j] > floor_)) throw ContractError("Schedule: time " + std::to_string(times_[j]) + " <= floor");
    if (j > 0 && !(times_[j] < times_[j - 1])) throw ContractError("Schedule: times not strictly decreasing");
  }
}

Schedule Schedule::fixed(int n, double floor) {
  if (n < 1) throw ContractError("make_fixed_schedule: n must be >= 1, got " + std::to_string(n));
  std::vector<double> t(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) t[static_cast<std::size_t>(j)] = 1.0 - static_cast<double>(j) / n;
  return Schedule(std::move(t), floor);
}

Schedule Schedule::uniform_to(int n, double last, double floor) {
  if (n < 1) throw ContractError("Schedule::uniform_to: n must be >= 1");
  if (n == 1) return Schedule({1.0}, floor);
  std::vector<double> t(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) t[static_cast<std::size_t>(j)] = 1.0 - (1.0 - last) * j / (n - 1);
  t.back() = last;
  return Schedule(std::move(t), floor);
}

Schedule Schedule::dynamic(int n_max, Rng& rng, double floor, double min_gap) {
  if (n_max < 1) throw ContractError("make_dynamic_schedule: n_max must be >= 1");
  const int n = rng.uniform_int(1, n_max);
  std::vector<double> t(static_cast<std::size_t>(n));
  t[0] = 1.0;
  if (n == 1) return Schedule(std::move(t), floor);
  for (;;) {
    for (int j = 1; j < n; ++j) t[static_cast<std::size_t>(j)] = rng.uniform(floor, 1.0);
    std::sort(t.begin() + 1, t.end(), std::greater<>());
    bool ok = t.back() - floor >= min_gap;
    for (int j = 1; j < n && ok; ++j) ok = t[static_cast<std::size_t>(j - 1)] - t[static_cast<std::size_t>(j)] >= min_gap;
    if (ok) break;
  }
  return Schedule(std::move(t), floor);
}

std::vector<double> Schedule::steps() const {
  std::vector<double> h;
  for (std::size_t j = 0; j + 1 < times_.size(); ++j) h.push_back(times_[j] - times_[j + 1]);
  return h;
}

ScheduleMode parse_schedule_mode(std::string_view s) {
  if (s == "dynamic") return ScheduleMode::dynamic;
  if (s == "fixed") return ScheduleMode::fixed;
  throw ContractError("unknown schedule mode '" + std::string(s) + "'");
}

std::string_view to_string(ScheduleMode m) { return m == ScheduleMode::dynamic ? "dynamic" : "fixed"; }

}  // namespace cdm::flow
