#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "cdm/flow/velocity_model.hpp"
#include "cdm/oracle/mixture.hpp"

namespace cdm::flow {

struct TeacherConfig {
  long steps = 20000;
  int batch = 256;
  double lr = 2e-3;
  double lr_final = 2e-5;  // cosine decay endpoint
  double weight_decay = 0.0;
  double cond_dropout = 0.1;  // probability of training a row on the null token
  double time_floor = kDefaultTimeFloor;
  double divergence_factor = 10.0;
  std::uint64_t seed = 0;
};

struct TeacherRecord {
  long step = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct TeacherResult {
  VelocityModel model;
  std::vector<TeacherRecord> history;
};

// Conditional flow matching with condition dropout: rows are drawn from the
// mixture with their labels, tau ~ U(floor, 1], and a `cond_dropout`
// fraction of rows sees the null token. Throws TrainingError when the
// smoothed loss exceeds `divergence_factor` times the first-step loss.
TeacherResult train_teacher(const oracle::MixtureSpec& data, const ModelConfig& model,
                            const TeacherConfig& config,
                            const std::function<void(const TeacherRecord&)>& on_step = {});

// Cosine decay from lr to lr_final over `steps`.
double cosine_lr(double lr, double lr_final, long step, long steps);

}  // namespace cdm::flow
