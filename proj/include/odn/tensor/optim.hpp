#pragma once

#include <cstdint>
#include <vector>

#include "odn/tensor/tape.hpp"

namespace odn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Moments start at zero; each step() consumes
/// the gradients currently stored in the parameters. Entries whose gradient
/// is exactly zero keep their value and moments (lazy update), so a zero
/// gradient never moves a parameter.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg = {});

  /// Throws TrainingAbort naming the first parameter with a non-finite gradient;
  /// nothing is updated in that case.
  void step();
  void zero_grad();

  void set_learning_rate(double lr);
  double learning_rate() const noexcept { return cfg_.learning_rate; }
  std::uint64_t steps() const noexcept { return t_; }
  const Tensor& first_moment(std::size_t i) const { return m_.at(i); }
  const Tensor& second_moment(std::size_t i) const { return v_.at(i); }

 private:
  std::vector<Parameter*> params_;
  AdamConfig cfg_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t t_ = 0;
};

}  // namespace odn
