#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace odn::pipeline {

struct GradResult {
  std::string name;
  double error = 0.0;  // max relative error over the probed points
};

/// Central-difference checks (h = 1e-5) of every differentiable op at
/// `points` seeded inputs each.
std::vector<GradResult> op_gradient_checks(std::size_t points = 10);

/// Loss gradients of the two tiny end-to-end models and both fusion/loss pairs.
std::vector<GradResult> model_gradient_checks();

inline constexpr double kGradTolerance = 1e-4;

}  // namespace odn::pipeline
