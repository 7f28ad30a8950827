#include "dtcl/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dtcl {

double ScheduleConfig::peak_lr() const {
  return linear_scaling ? base_lr * static_cast<double>(batch_size) / 256.0 : base_lr;
}

void ScheduleConfig::validate() const {
  if (!(base_lr >= 0)) throw std::invalid_argument("ScheduleConfig: base_lr must be non-negative");
  if (total_epochs < 0) throw std::invalid_argument("ScheduleConfig: total_epochs must be non-negative");
  if (batch_size < 2) throw std::invalid_argument("ScheduleConfig: batch size must be at least 2");
  if (!(warmup_epochs >= 0) || warmup_epochs > total_epochs) {
    throw std::invalid_argument("ScheduleConfig: warmup_epochs must lie in [0, total_epochs]");
  }
  if (!(weight_decay >= 0) || !(momentum >= 0 && momentum < 1)) {
    throw std::invalid_argument("ScheduleConfig: invalid weight decay or momentum");
  }
}

double lr_at(std::int64_t step, const ScheduleConfig& s, std::int64_t steps_per_epoch) {
  const double peak = s.peak_lr();
  const double warmup = std::round(s.warmup_epochs * static_cast<double>(steps_per_epoch));
  const double total = static_cast<double>(s.total_epochs) * static_cast<double>(steps_per_epoch);
  const double t = static_cast<double>(std::max<std::int64_t>(step, 0));
  if (t < warmup) return peak * (t + 1.0) / warmup;
  if (total <= warmup) return peak;
  const double progress = std::min((t - warmup) / (total - warmup), 1.0);
  return 0.5 * peak * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace dtcl
