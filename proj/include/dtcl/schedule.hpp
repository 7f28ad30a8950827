#pragma once

#include <cstdint>

namespace dtcl {

struct ScheduleConfig {
  double base_lr = 0.3;
  double warmup_epochs = 2;
  int total_epochs = 30;
  int batch_size = 128;
  double weight_decay = 5e-4;
  double momentum = 0.9;
  /// peak = base_lr * batch_size / 256 when set.
  bool linear_scaling = true;

  double peak_lr() const;
  void validate() const;
};

/// Linear warmup to the peak over the warmup steps, then a single cosine
/// decay reaching zero at the last scheduled step.
double lr_at(std::int64_t step, const ScheduleConfig& schedule, std::int64_t steps_per_epoch);

}  // namespace dtcl
