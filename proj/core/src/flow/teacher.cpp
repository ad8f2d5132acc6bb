#include "cdm/flow/teacher.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "cdm/ad/adamw.hpp"
#include "cdm/error.hpp"

namespace cdm::flow {

double cosine_lr(double lr, double lr_final, long step, long steps) {
  if (steps <= 1) return lr;
  const double frac = static_cast<double>(step) / static_cast<double>(steps - 1);
  return lr_final + 0.5 * (lr - lr_final) * (1.0 + std::cos(std::numbers::pi * frac));
}

TeacherResult train_teacher(const oracle::MixtureSpec& data, const ModelConfig& model_config,
                            const TeacherConfig& config, const std::function<void(const TeacherRecord&)>& on_step) {
  data.validate();
  if (config.steps < 0) throw ContractError("train_teacher: negative step count");
  if (config.batch < 1) throw ContractError("train_teacher: batch must be >= 1");
  if (!(config.cond_dropout >= 0.0 && config.cond_dropout <= 1.0))
    throw ContractError("train_teacher: cond_dropout must lie in [0, 1]");
  if (model_config.dim != data.dim) throw DimensionError("train_teacher: model dim differs from data dim");
  if (model_config.num_classes != data.num_classes())
    throw ContractError("train_teacher: model has " + std::to_string(model_config.num_classes) +
                        " classes, data has " + std::to_string(data.num_classes()));

  Rng rng(config.seed);
  TeacherResult result{VelocityModel(model_config, rng), {}};
  VelocityModel& model = result.model;
  auto params = model.parameters();
  ad::AdamW opt(ad::AdamWConfig{config.lr, 0.9, 0.999, config.weight_decay, 1e-8});

  const int b = config.batch;
  std::vector<int> classes;
  double initial = 0.0;
  double smoothed = 0.0;
  for (long step = 0; step < config.steps; ++step) {
    const Mat x0 = data.sample(b, rng, &classes);
    Mat tau(b, 1);
    for (int i = 0; i < b; ++i) tau(i, 0) = rng.uniform_left_open(config.time_floor, 1.0);
    const Mat eps = rng.normal(b, data.dim);
    for (int i = 0; i < b; ++i)
      if (rng.uniform() < config.cond_dropout) classes[static_cast<std::size_t>(i)] = model.null_condition();

    const ad::Tensor loss = flow_matching_loss(model, x0, tau, eps, classes);
    const double value = loss.item();
    if (!std::isfinite(value))
      throw TrainingError("train_teacher: non-finite loss at step " + std::to_string(step));
    if (step == 0) {
      initial = value;
      smoothed = value;
    } else {
      smoothed = 0.98 * smoothed + 0.02 * value;
    }
    if (smoothed > config.divergence_factor * initial)
      throw TrainingError("train_teacher: diverged at step " + std::to_string(step) + " (smoothed loss " +
                          std::to_string(smoothed) + ", initial " + std::to_string(initial) + ")");

    ad::backward(loss);
    const double lr = cosine_lr(config.lr, config.lr_final, step, config.steps);
    opt.set_lr(lr);
    opt.step(params);

    TeacherRecord record{step, value, lr};
    result.history.push_back(record);
    if (on_step) on_step(record);
  }
  return result;
}

}  // namespace cdm::flow
