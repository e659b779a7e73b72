#include <Eigen/Dense>
#include <cmath>

#include "doctest.h"
#include "odn/core/error.hpp"
#include "odn/profile/profile.hpp"

using namespace odn;

TEST_CASE("rbf interpolation conditions") {
  std::vector<double> c1{0.0}, v1{5.0}, q1{0.0};
  CHECK(gaussian_rbf_interpolate(c1, v1, 0.3, q1)[0] == doctest::Approx(5.0).epsilon(1e-15));

  std::vector<double> c2{-1.0, 1.0}, v2{2.5, 2.5}, q2{0.0};
  const double mid = gaussian_rbf_interpolate(c2, v2, 0.8, q2)[0];
  // equal weights w = v / (1 + phi(2)), evaluated at distance 1 from both centers
  const double w = 2.5 / (1.0 + std::exp(-std::pow(0.8 * 2.0, 2)));
  CHECK(mid == doctest::Approx(2.0 * w * std::exp(-0.64)).epsilon(1e-14));
}

TEST_CASE("rbf reproduces control values against an independent solve") {
  std::vector<double> c{0.0, 1.3, 4.0}, v{1.0, -2.0, 0.5};
  const double gamma = 0.6;
  Eigen::Matrix3d a;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) a(i, j) = std::exp(-std::pow(gamma * (c[i] - c[j]), 2));
  Eigen::Vector3d w = a.colPivHouseholderQr().solve(Eigen::Vector3d(v[0], v[1], v[2]));
  std::vector<double> q{0.0, 1.3, 4.0, 2.2};
  auto out = gaussian_rbf_interpolate(c, v, gamma, q);
  for (int i = 0; i < 3; ++i) CHECK(std::fabs(out[i] - v[i]) < 1e-9);
  double ref = 0.0;
  for (int j = 0; j < 3; ++j) ref += w(j) * std::exp(-std::pow(gamma * (2.2 - c[j]), 2));
  CHECK(out[3] == doctest::Approx(ref).epsilon(1e-10));
}

TEST_CASE("rbf rejects duplicate centers") {
  std::vector<double> c{0.0, 1.0, 1.0}, v{1, 2, 3}, q{0.5};
  CHECK_THROWS_AS(gaussian_rbf_interpolate(c, v, 0.5, q), InterpolationError);
}

TEST_CASE("default profile interpolants pass through every control point") {
  ProfileConfig cfg;
  std::vector<double> centers(cfg.control_points), values(cfg.control_points);
  Rng rng(8);
  for (std::size_t j = 0; j < centers.size(); ++j) {
    centers[j] = cfg.duration * j / (centers.size() - 1.0);
    values[j] = uniform(rng, 0.5, 3.0);
  }
  auto out = gaussian_rbf_interpolate(centers, values, cfg.effective_gamma(), centers);
  for (std::size_t j = 0; j < centers.size(); ++j) CHECK(std::fabs(out[j] - values[j]) < 1e-9);
}

TEST_CASE("flux and displacement profiles: trend, determinism, bounds") {
  ProfileConfig cfg;
  Rng a(123), b(123);
  auto f1 = sample_flux_profile(cfg, a);
  auto f2 = sample_flux_profile(cfg, b);
  CHECK(f1.values.size() == 101);
  CHECK(f1.values == f2.values);
  CHECK(f1.values.front() >= f1.values.back());
  auto d1 = sample_displacement_profile(cfg, a);
  auto d2 = sample_displacement_profile(cfg, b);
  CHECK(d1.values == d2.values);
  CHECK(d1.values.back() >= d1.values.front());

  Rng sweep(7);
  bool flux_ok = true, disp_ok = true, trend_ok = true;
  for (int i = 0; i < 10000; ++i) {
    auto f = sample_flux_profile(cfg, sweep);
    auto d = sample_displacement_profile(cfg, sweep);
    for (double v : f.values) flux_ok = flux_ok && v >= 0.0 && v <= cfg.flux_start.hi && std::isfinite(v);
    for (double v : d.values) disp_ok = disp_ok && v >= 0.0 && v <= cfg.displacement_end.hi && std::isfinite(v);
    trend_ok = trend_ok && f.values.front() >= f.values.back() && d.values.back() >= d.values.front();
  }
  CHECK(flux_ok);
  CHECK(disp_ok);
  CHECK(trend_ok);
}

TEST_CASE("profile interpolation in time") {
  TimeSeriesProfile p{TimeSeriesProfile::Kind::flux, std::vector<double>(101), 20.0};
  for (std::size_t i = 0; i < 101; ++i) p.values[i] = static_cast<double>(i);
  CHECK(p.at(0.0) == 0.0);
  CHECK(p.at(20.0) == 100.0);
  CHECK(p.at(0.1) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("profile config validation") {
  ProfileConfig cfg;
  cfg.control_points = 1;
  Rng rng(1);
  CHECK_THROWS_AS(sample_flux_profile(cfg, rng), ConfigError);
}
