#include "odn/tensor/optim.hpp"

#include <cmath>

#include "odn/core/error.hpp"

namespace odn {

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  if (!(cfg_.learning_rate >= 0.0)) throw ParameterError("Adam learning rate must be non-negative");
  for (Parameter* p : params_) {
    m_.emplace_back(p->value.shape(), 0.0);
    v_.emplace_back(p->value.shape(), 0.0);
  }
}

void Adam::set_learning_rate(double lr) {
  if (!(lr >= 0.0)) throw ParameterError("Adam learning rate must be non-negative");
  cfg_.learning_rate = lr;
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->grad.fill(0.0);
}

void Adam::step() {
  for (Parameter* p : params_) {
    if (p->grad.shape() != p->value.shape()) {
      throw DimensionError("gradient of '" + p->name + "' has shape " + to_string(p->grad.shape()));
    }
    if (!all_finite(p->grad.values())) {
      throw TrainingAbort("non-finite gradient in parameter '" + p->name + "' at step " + std::to_string(t_ + 1));
    }
  }
  ++t_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    double* w = params_[k]->value.data();
    const double* g = params_[k]->grad.data();
    double* m = m_[k].data();
    double* v = v_[k].data();
    for (std::size_t i = 0, n = m_[k].size(); i < n; ++i) {
      if (g[i] == 0.0) continue;
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      w[i] -= cfg_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.epsilon);
    }
  }
}

}  // namespace odn
