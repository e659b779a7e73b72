#include "odn/cast/oracle.hpp"

#include <cmath>

#include "odn/cast/slice.hpp"

namespace odn::cast {

namespace {
constexpr int kSteps = 10;
}

RampOutcome ramp_bounded(Law law, double temperature_c, double strain_rate, double dt, double carbon_pct) {
  const double E = default_steel_curves({}).elastic_modulus(temperature_c);
  RampOutcome r;
  double acc = 0.0;
  for (int k = 1; k <= kSteps; ++k) {
    ConstitutiveInput in{law, temperature_c, E, strain_rate * k * dt - r.inelastic, acc, dt, carbon_pct, 0.01};
    const auto out = integrate_constitutive(in);
    r.inelastic += out.inelastic_increment;
    acc += std::fabs(out.inelastic_increment);
    r.stress = out.stress;
  }
  return r;
}

RampOutcome ramp_explicit(Law law, double temperature_c, double strain_rate, double dt, double carbon_pct) {
  const double E = default_steel_curves({}).elastic_modulus(temperature_c);
  const double t_k = temperature_c + 273.15;
  const double h = dt / 1000.0;
  RampOutcome r;
  double acc = 0.0;
  for (int k = 0; k < kSteps * 1000; ++k) {
    const double s = E * (strain_rate * k * h - r.inelastic);
    double rate;
    if (law == Law::kozlowski) {
      const double f1 = 130.5 - 5.128e-3 * t_k, f2 = -0.6289 + 1.114e-3 * t_k, f3 = 8.132 - 1.54e-3 * t_k;
      const double fc = 46550.0 - 71400.0 * carbon_pct + 12000.0 * carbon_pct * carbon_pct;
      const double base = std::fabs(s) - f1 * std::pow(acc, f2);
      rate = base > 0 ? fc * std::pow(base, f3) * std::exp(-44465.0 / t_k) : 0.0;
    } else {
      const double fd = 1.3678e4 * std::pow(carbon_pct, -5.56e-2);
      const double m = -9.4156e-5 * t_k + 0.3495, n = 1.0 / (1.617e-4 * t_k - 0.06166);
      rate = 0.1 * std::pow(std::fabs(s / (fd * std::pow(t_k / 300.0, -5.52) * std::pow(1 + 1000 * acc, m))), n);
    }
    r.inelastic += h * rate * (s < 0 ? -1.0 : 1.0);
    acc += h * rate;
  }
  r.stress = E * (strain_rate * kSteps * dt - r.inelastic);
  return r;
}

}  // namespace odn::cast
