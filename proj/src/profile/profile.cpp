#include "odn/profile/profile.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "odn/core/error.hpp"

namespace odn {

double TimeSeriesProfile::time_of(std::size_t i) const {
  return duration * static_cast<double>(i) / static_cast<double>(values.size() - 1);
}

double TimeSeriesProfile::at(double t) const {
  if (values.size() < 2) throw DimensionError("profile needs at least two samples");
  const double s = std::clamp(t / duration, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const std::size_t i = std::min(static_cast<std::size_t>(s), values.size() - 2);
  const double w = s - static_cast<double>(i);
  return (1.0 - w) * values[i] + w * values[i + 1];
}

void ProfileConfig::validate() const {
  if (control_points < 2) throw ConfigError("profile.control_points must be at least 2");
  if (!(duration > 0.0)) throw ConfigError("profile.duration must be positive");
  if (gamma < 0.0) throw ConfigError("profile.gamma must be positive (or 0 for the default)");
  for (const Band& b : {flux_start, flux_end, displacement_start, displacement_end}) {
    if (!(b.lo <= b.hi) || b.lo < 0.0) throw ConfigError("profile bands need 0 <= lo <= hi");
  }
  auto flat = [](Band a, Band b) { return a.lo == a.hi && b.lo == b.hi && a.lo == b.lo; };
  if (flat(flux_start, flux_end)) throw ConfigError("flux bands are degenerate");
  if (flat(displacement_start, displacement_end)) throw ConfigError("displacement bands are degenerate");
}

double ProfileConfig::effective_gamma() const {
  if (gamma > 0.0) return gamma;
  const double spacing = duration / static_cast<double>(control_points - 1);
  return 1.0 / (2.0 * spacing);
}

std::vector<double> gaussian_rbf_interpolate(std::span<const double> centers, std::span<const double> values,
                                             double gamma, std::span<const double> queries) {
  const std::size_t n = centers.size();
  if (n == 0 || values.size() != n) throw InterpolationError("RBF needs matching, nonempty centers and values");
  if (!(gamma > 0.0)) throw InterpolationError("RBF shape parameter must be positive");
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (centers[i] == centers[j]) {
        throw InterpolationError("singular RBF system: duplicate center at t = " + std::to_string(centers[i]));
      }
    }
  }
  auto phi = [gamma](double r) { return std::exp(-(gamma * r) * (gamma * r)); };
  Eigen::MatrixXd a(n, n);
  Eigen::VectorXd rhs(n);
  for (std::size_t i = 0; i < n; ++i) {
    rhs(i) = values[i];
    for (std::size_t j = 0; j < n; ++j) a(i, j) = phi(centers[i] - centers[j]);
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  if (!lu.isInvertible() || lu.rcond() < 1e-14) {
    throw InterpolationError("singular RBF system (rcond " + std::to_string(lu.rcond()) + ")");
  }
  Eigen::VectorXd w = lu.solve(rhs);
  // one refinement step keeps the interpolation residual near rounding level
  w += lu.solve(rhs - a * w);

  std::vector<double> out(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += w(j) * phi(queries[q] - centers[j]);
    out[q] = s;
  }
  return out;
}

namespace {

TimeSeriesProfile sample_profile(const ProfileConfig& cfg, Rng& rng, TimeSeriesProfile::Kind kind, Band start,
                                 Band end, bool decreasing) {
  cfg.validate();
  const std::size_t n = cfg.control_points;
  std::vector<double> centers(n), controls(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double s = static_cast<double>(j) / static_cast<double>(n - 1);
    centers[j] = s * cfg.duration;
    const double lo = start.lo + s * (end.lo - start.lo);
    const double hi = start.hi + s * (end.hi - start.hi);
    controls[j] = lo + (hi - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  }
  if (cfg.enforce_trend) {
    const bool violated = decreasing ? controls.front() < controls.back() : controls.back() < controls.front();
    if (violated) std::swap(controls.front(), controls.back());
  }
  TimeSeriesProfile p;
  p.kind = kind;
  p.duration = cfg.duration;
  std::vector<double> queries(kProfileSamples);
  for (std::size_t i = 0; i < kProfileSamples; ++i) queries[i] = p.time_of(i);
  p.values = gaussian_rbf_interpolate(centers, controls, cfg.effective_gamma(), queries);
  // the interpolant may overshoot between control points; keep it inside the configured envelope
  const double floor = std::max(0.0, std::min(start.lo, end.lo));
  const double ceil = std::max(start.hi, end.hi);
  for (double& v : p.values) v = std::clamp(v, floor, ceil);
  p.values.front() = controls.front();
  p.values.back() = controls.back();
  return p;
}

}  // namespace

TimeSeriesProfile sample_flux_profile(const ProfileConfig& cfg, Rng& rng) {
  return sample_profile(cfg, rng, TimeSeriesProfile::Kind::flux, cfg.flux_start, cfg.flux_end, true);
}

TimeSeriesProfile sample_displacement_profile(const ProfileConfig& cfg, Rng& rng) {
  return sample_profile(cfg, rng, TimeSeriesProfile::Kind::displacement, cfg.displacement_start,
                        cfg.displacement_end, false);
}

}  // namespace odn
