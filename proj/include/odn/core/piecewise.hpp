#pragma once

#include <span>
#include <vector>

namespace odn {

/// Piecewise-linear function of one variable through tabulated knots,
/// held constant beyond the first and last knot.
class PiecewiseLinear {
 public:
  PiecewiseLinear() = default;
  PiecewiseLinear(std::vector<double> x, std::vector<double> y);

  double operator()(double x) const;
  /// Exact integral of the clamped interpolant over [a, b] (signed).
  double integral(double a, double b) const;

  std::span<const double> knots() const noexcept { return x_; }
  std::span<const double> values() const noexcept { return y_; }
  double max_value() const;
  double min_value() const;

 private:
  double primitive(double x) const;

  std::vector<double> x_;
  std::vector<double> y_;
  std::vector<double> cumulative_;  // integral from x_[0] to x_[i]
};

/// Specific enthalpy H(T) = integral of c_p plus latent heat released
/// linearly between solidus and liquidus. Strictly increasing and exactly
/// invertible (piecewise quadratic).
class EnthalpyCurve {
 public:
  EnthalpyCurve() = default;
  EnthalpyCurve(PiecewiseLinear specific_heat, double latent_heat, double solidus, double liquidus,
                double reference_temperature);

  double enthalpy(double temperature) const;
  /// dH/dT, one-sided from above at knots.
  double slope(double temperature) const;
  double temperature(double enthalpy) const;

  double latent_heat() const noexcept { return latent_; }
  double solidus() const noexcept { return solidus_; }
  double liquidus() const noexcept { return liquidus_; }
  const PiecewiseLinear& specific_heat() const noexcept { return cp_; }

 private:
  struct Segment {
    double t0;
    double h0;
    double linear;     // c_p(t0) + latent slope
    double quadratic;  // half the c_p slope
  };
  std::size_t segment_for_temperature(double t) const;

  PiecewiseLinear cp_;
  double latent_ = 0.0;
  double solidus_ = 0.0;
  double liquidus_ = 0.0;
  std::vector<Segment> segments_;
};

}  // namespace odn
