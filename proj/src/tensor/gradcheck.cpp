#include "odn/tensor/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "odn/core/error.hpp"

namespace odn {

namespace {

double scalar_of(const Var& v) {
  if (v.value().size() != 1) throw DimensionError("grad_check needs a scalar function, got " + to_string(v.shape()));
  const double s = v.value()[0];
  if (!std::isfinite(s)) throw DomainError("grad_check: function value is not finite");
  return s;
}

double relative_error(double analytic, double numeric) {
  return std::fabs(analytic - numeric) / std::max(1e-8, std::fabs(analytic) + std::fabs(numeric));
}

}  // namespace

double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double h) {
  Tensor analytic;
  {
    Tape tape;
    Var xv = tape.variable(x);
    Var y = f(tape, xv);
    scalar_of(y);
    tape.backward(y);
    analytic = tape.gradient(xv);
  }
  auto eval = [&](const Tensor& at) {
    Tape tape;
    return scalar_of(f(tape, tape.constant(at)));
  };
  double worst = 0.0;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    probe[i] = x0 + h;
    const double up = eval(probe);
    probe[i] = x0 - h;
    const double down = eval(probe);
    probe[i] = x0;
    worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * h)));
  }
  return worst;
}

double grad_check_parameters(const std::function<Var(Tape&)>& loss, std::span<Parameter* const> params, double h,
                             std::size_t max_per_param, std::uint64_t seed) {
  for (Parameter* p : params) p->grad.fill(0.0);
  {
    Tape tape;
    Var y = loss(tape);
    scalar_of(y);
    tape.backward(y);
  }
  auto eval = [&]() {
    Tape tape;
    return scalar_of(loss(tape));
  };
  Rng rng(seed);
  double worst = 0.0;
  for (Parameter* p : params) {
    std::vector<std::size_t> coords(p->value.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (max_per_param != 0 && coords.size() > max_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(max_per_param);
    }
    for (std::size_t i : coords) {
      const double w0 = p->value[i];
      p->value[i] = w0 + h;
      const double up = eval();
      p->value[i] = w0 - h;
      const double down = eval();
      p->value[i] = w0;
      worst = std::max(worst, relative_error(p->grad[i], (up - down) / (2.0 * h)));
    }
  }
  return worst;
}

}  // namespace odn
