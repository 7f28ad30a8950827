#pragma once

#include "dtcl/numerics.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dtcl {

/// ||analytic - numeric|| / max(||numeric||, floor).
double relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric,
                      double floor = 1e-12);

struct GradcheckItem {
  std::string name;
  int instances = 0;
  double max_relative_error = 0.0;
};

/// Central-difference checks of every loss gradient and of the trainer's
/// parameter gradients on a small smooth (tanh) network. Stop-gradient
/// factors are frozen at the evaluation point before differencing.
std::vector<GradcheckItem> run_gradcheck(std::uint64_t seed, int instances, double h = 1e-4);

}  // namespace dtcl
