#include "odn/core/piecewise.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "odn/core/error.hpp"

namespace odn {

PiecewiseLinear::PiecewiseLinear(std::vector<double> x, std::vector<double> y)
    : x_(std::move(x)), y_(std::move(y)) {
  if (x_.empty() || x_.size() != y_.size()) {
    throw ParameterError("piecewise table needs matching, non-empty knot and value lists");
  }
  for (std::size_t i = 1; i < x_.size(); ++i) {
    if (!(x_[i] > x_[i - 1])) throw ParameterError("piecewise table knots must be strictly increasing");
  }
  cumulative_.assign(x_.size(), 0.0);
  for (std::size_t i = 1; i < x_.size(); ++i) {
    cumulative_[i] = cumulative_[i - 1] + 0.5 * (y_[i] + y_[i - 1]) * (x_[i] - x_[i - 1]);
  }
}

double PiecewiseLinear::operator()(double x) const {
  if (x <= x_.front()) return y_.front();
  if (x >= x_.back()) return y_.back();
  const auto it = std::upper_bound(x_.begin(), x_.end(), x);
  const std::size_t i = static_cast<std::size_t>(it - x_.begin()) - 1;
  const double w = (x - x_[i]) / (x_[i + 1] - x_[i]);
  return y_[i] + w * (y_[i + 1] - y_[i]);
}

double PiecewiseLinear::primitive(double x) const {
  if (x <= x_.front()) return (x - x_.front()) * y_.front();
  if (x >= x_.back()) return cumulative_.back() + (x - x_.back()) * y_.back();
  const auto it = std::upper_bound(x_.begin(), x_.end(), x);
  const std::size_t i = static_cast<std::size_t>(it - x_.begin()) - 1;
  const double yx = (*this)(x);
  return cumulative_[i] + 0.5 * (y_[i] + yx) * (x - x_[i]);
}

double PiecewiseLinear::integral(double a, double b) const { return primitive(b) - primitive(a); }

double PiecewiseLinear::max_value() const { return *std::max_element(y_.begin(), y_.end()); }
double PiecewiseLinear::min_value() const { return *std::min_element(y_.begin(), y_.end()); }

EnthalpyCurve::EnthalpyCurve(PiecewiseLinear specific_heat, double latent_heat, double solidus,
                             double liquidus, double reference_temperature)
    : cp_(std::move(specific_heat)), latent_(latent_heat), solidus_(solidus), liquidus_(liquidus) {
  if (!(liquidus_ > solidus_)) throw ParameterError("liquidus must exceed solidus");
  if (latent_ < 0.0) throw ParameterError("latent heat must be non-negative");
  if (cp_.min_value() <= 0.0) throw ParameterError("specific heat must be positive");

  std::vector<double> knots(cp_.knots().begin(), cp_.knots().end());
  knots.push_back(solidus_);
  knots.push_back(liquidus_);
  knots.push_back(reference_temperature);
  std::sort(knots.begin(), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());

  const double latent_slope = latent_ / (liquidus_ - solidus_);
  // Enthalpy is zero at the reference temperature.
  auto raw = [&](double t) {
    double fl = std::clamp((t - solidus_) / (liquidus_ - solidus_), 0.0, 1.0);
    return cp_.integral(reference_temperature, t) + latent_ * fl;
  };
  segments_.reserve(knots.size());
  for (std::size_t i = 0; i < knots.size(); ++i) {
    const double t0 = knots[i];
    const bool mushy = t0 >= solidus_ && t0 < liquidus_;
    double cp_slope = 0.0;
    if (i + 1 < knots.size()) cp_slope = (cp_(knots[i + 1]) - cp_(t0)) / (knots[i + 1] - t0);
    segments_.push_back({t0, raw(t0), cp_(t0) + (mushy ? latent_slope : 0.0), 0.5 * cp_slope});
  }
}

std::size_t EnthalpyCurve::segment_for_temperature(double t) const {
  if (t < segments_.front().t0) return 0;
  auto it = std::upper_bound(segments_.begin(), segments_.end(), t,
                             [](double v, const Segment& s) { return v < s.t0; });
  return static_cast<std::size_t>(it - segments_.begin()) - 1;
}

double EnthalpyCurve::enthalpy(double t) const {
  const Segment& s = segments_[segment_for_temperature(t)];
  const double u = t - s.t0;
  if (u < 0.0) return s.h0 + s.linear * u;  // below the first knot: constant c_p
  return s.h0 + s.linear * u + s.quadratic * u * u;
}

double EnthalpyCurve::slope(double t) const {
  const Segment& s = segments_[segment_for_temperature(t)];
  const double u = std::max(0.0, t - s.t0);
  return s.linear + 2.0 * s.quadratic * u;
}

double EnthalpyCurve::temperature(double h) const {
  if (h < segments_.front().h0) {
    const Segment& s = segments_.front();
    return s.t0 + (h - s.h0) / s.linear;
  }
  auto it = std::upper_bound(segments_.begin(), segments_.end(), h,
                             [](double v, const Segment& s) { return v < s.h0; });
  const Segment& s = *(it - 1);
  const double d = h - s.h0;
  // root of quadratic*u^2 + linear*u - d = 0 in the cancellation-free form
  const double disc = s.linear * s.linear + 4.0 * s.quadratic * d;
  const double u = 2.0 * d / (s.linear + std::sqrt(std::max(disc, 0.0)));
  return s.t0 + u;
}

}  // namespace odn
