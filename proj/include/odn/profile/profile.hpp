#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "odn/core/rng.hpp"

namespace odn {

inline constexpr std::size_t kProfileSamples = 101;

struct TimeSeriesProfile {
  enum class Kind { flux, displacement };

  Kind kind = Kind::flux;
  std::vector<double> values;  // MW/m^2 for flux, mm for displacement
  double duration = 0.0;       // s

  double time_of(std::size_t i) const;
  /// Linear interpolation between samples, clamped to [0, duration].
  double at(double t) const;
};

struct Band {
  double lo = 0.0;
  double hi = 0.0;
};

struct ProfileConfig {
  std::size_t control_points = 8;
  Band flux_start{2.0, 3.0};
  Band flux_end{0.5, 1.5};
  Band displacement_start{0.0, 0.0};
  Band displacement_end{0.1, 0.5};
  /// Gaussian shape parameter in 1/s; zero selects 1 / (2 control spacings).
  double gamma = 0.0;
  bool enforce_trend = true;
  double duration = 20.0;

  void validate() const;
  double effective_gamma() const;
};

/// Gaussian RBF interpolant phi(r) = exp(-(gamma r)^2) through (centers, values),
/// evaluated at the query points.
std::vector<double> gaussian_rbf_interpolate(std::span<const double> centers, std::span<const double> values,
                                             double gamma, std::span<const double> queries);

TimeSeriesProfile sample_flux_profile(const ProfileConfig& cfg, Rng& rng);
TimeSeriesProfile sample_displacement_profile(const ProfileConfig& cfg, Rng& rng);

}  // namespace odn
