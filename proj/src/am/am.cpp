#include "odn/am/am.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <sstream>

#include "odn/core/error.hpp"

namespace odn::am {

namespace {

using P = Inconel625Table::Property;
constexpr double kStefanBoltzmann = 5.670374419e-8;
constexpr double kKelvin = 273.15;

const std::array<double, 9>& column(P which) {
  switch (which) {
    case P::k: return Inconel625Table::conductivity;
    case P::c_p: return Inconel625Table::specific_heat;
    case P::cte: return Inconel625Table::expansion;
    case P::E: return Inconel625Table::modulus;
    case P::yield: return Inconel625Table::yield;
  }
  throw ParameterError("unknown Inconel property");
}

double unit_scale(P which) {
  switch (which) {
    case P::k: return 1.0;      // mW/(mm C) == W/(m K)
    case P::c_p: return 100.0;  // 1e8 mJ/(tonne C) -> J/(kg K)
    case P::cte: return 1e-5;
    case P::E: return 1e5;  // MPa
    case P::yield: return 1.0;
  }
  return 1.0;
}

}  // namespace

double lookup_property(double temperature_c, P which) {
  const auto& t = Inconel625Table::temperature;
  const auto& v = column(which);
  double raw;
  if (temperature_c <= t.front()) {
    raw = v.front();
  } else if (temperature_c >= t.back()) {
    raw = v.back();
  } else {
    const std::size_t i = static_cast<std::size_t>(std::upper_bound(t.begin(), t.end(), temperature_c) - t.begin()) - 1;
    const double w = (temperature_c - t[i]) / (t[i + 1] - t[i]);
    raw = v[i] + w * (v[i + 1] - v[i]);
  }
  return raw * unit_scale(which);
}

PiecewiseLinear property_curve(P which) {
  const auto& t = Inconel625Table::temperature;
  const auto& v = column(which);
  std::vector<double> y(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) y[i] = v[i] * unit_scale(which);
  return PiecewiseLinear(std::vector<double>(t.begin(), t.end()), std::move(y));
}

// ---------------------------------------------------------------- designs

double DesignMask::volume_fraction() const {
  return static_cast<double>(std::count(cells.begin(), cells.end(), std::uint8_t{1})) / static_cast<double>(kPixels);
}

namespace {

/// Component labels (4-connectivity); returns label per pixel, -1 on void.
std::vector<int> label_components(const std::vector<std::uint8_t>& cells, std::vector<std::size_t>& sizes) {
  std::vector<int> label(kPixels, -1);
  sizes.clear();
  std::vector<std::size_t> stack;
  for (std::size_t s = 0; s < kPixels; ++s) {
    if (!cells[s] || label[s] >= 0) continue;
    const int id = static_cast<int>(sizes.size());
    sizes.push_back(0);
    stack.push_back(s);
    label[s] = id;
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      ++sizes[id];
      const std::size_t r = p / kGrid, c = p % kGrid;
      auto visit = [&](std::size_t q) {
        if (cells[q] && label[q] < 0) {
          label[q] = id;
          stack.push_back(q);
        }
      };
      if (r > 0) visit(p - kGrid);
      if (r + 1 < kGrid) visit(p + kGrid);
      if (c > 0) visit(p - 1);
      if (c + 1 < kGrid) visit(p + 1);
    }
  }
  return label;
}

std::vector<double> gaussian_blur(const std::vector<double>& in, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i) kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  const double norm = std::accumulate(kernel.begin(), kernel.end(), 0.0);
  for (double& k : kernel) k /= norm;
  const int n = static_cast<int>(kGrid);
  auto reflect = [n](int i) {
    while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
    return i;
  };
  std::vector<double> tmp(kPixels), out(kPixels);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) s += kernel[i + radius] * in[r * n + reflect(c + i)];
      tmp[r * n + c] = s;
    }
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) s += kernel[i + radius] * tmp[reflect(r + i) * n + c];
      out[r * n + c] = s;
    }
  return out;
}

/// 3x3 majority vote: removes speckle and fills pinholes.
std::vector<std::uint8_t> majority(const std::vector<std::uint8_t>& cells) {
  std::vector<std::uint8_t> out(kPixels, 0);
  const int n = static_cast<int>(kGrid);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      int on = 0, total = 0;
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if (rr < 0 || rr >= n || cc < 0 || cc >= n) continue;
          ++total;
          on += cells[rr * n + cc];
        }
      out[r * n + c] = 2 * on > total ? 1 : 0;
    }
  return out;
}

std::vector<std::uint8_t> largest_base_component(const std::vector<std::uint8_t>& cells) {
  std::vector<std::size_t> sizes;
  const auto label = label_components(cells, sizes);
  int best = -1;
  for (std::size_t c = 0; c < kGrid; ++c) {
    const int id = label[c];
    if (id >= 0 && (best < 0 || sizes[id] > sizes[best])) best = id;
  }
  std::vector<std::uint8_t> out(kPixels, 0);
  if (best < 0) return out;
  for (std::size_t p = 0; p < kPixels; ++p) out[p] = label[p] == best ? 1 : 0;
  return out;
}

std::vector<std::uint8_t> shape_at(const std::vector<double>& field, double threshold) {
  std::vector<std::uint8_t> raw(kPixels);
  for (std::size_t p = 0; p < kPixels; ++p) raw[p] = field[p] > threshold ? 1 : 0;
  return largest_base_component(majority(raw));
}

double fraction(const std::vector<std::uint8_t>& cells) {
  return static_cast<double>(std::count(cells.begin(), cells.end(), std::uint8_t{1})) / static_cast<double>(kPixels);
}

}  // namespace

bool DesignMask::base_connected() const {
  std::vector<std::size_t> sizes;
  const auto label = label_components(cells, sizes);
  std::vector<std::uint8_t> grounded(sizes.size(), 0);
  for (std::size_t c = 0; c < kGrid; ++c)
    if (label[c] >= 0) grounded[label[c]] = 1;
  for (std::size_t p = 0; p < kPixels; ++p)
    if (label[p] >= 0 && !grounded[label[p]]) return false;
  return true;
}

DesignMask generate_design(Rng& rng, double vf_target, const DesignConfig& cfg) {
  DesignMask mask;
  if (vf_target == 1.0) {
    std::fill(mask.cells.begin(), mask.cells.end(), std::uint8_t{1});
    return mask;
  }
  if (!(vf_target >= 0.3 && vf_target <= 0.7)) throw ParameterError("volume fraction target must lie in [0.3, 0.7]");
  if (!(cfg.smoothing > 0.0) || !(cfg.vf_tolerance > 0.0) || cfg.max_retries < 1) {
    throw ParameterError("design generator needs positive smoothing, tolerance and retry budget");
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
    std::vector<double> noise(kPixels);
    for (double& v : noise) v = normal(rng);
    const auto field = gaussian_blur(noise, cfg.smoothing);
    double lo = *std::min_element(field.begin(), field.end());
    double hi = *std::max_element(field.begin(), field.end());
    std::vector<std::uint8_t> best;
    double best_gap = 1.0;
    for (int it = 0; it < 50; ++it) {
      const double mid = 0.5 * (lo + hi);
      auto cells = shape_at(field, mid);
      const double vf = fraction(cells);
      const double gap = std::abs(vf - vf_target);
      if (gap < best_gap) {
        best_gap = gap;
        best = std::move(cells);
      }
      if (vf > vf_target) lo = mid; else hi = mid;
    }
    if (best_gap <= cfg.vf_tolerance) {
      mask.cells = std::move(best);
      return mask;
    }
  }
  std::ostringstream msg;
  msg << "no base-connected design within " << cfg.vf_tolerance << " of volume fraction " << vf_target << " after "
      << cfg.max_retries << " attempts";
  throw GenerationError(msg.str());
}

// ---------------------------------------------------------------- process

void ProcessParams::validate() const {
  if (!(velocity > 0.0)) throw ParameterError("velocity must be positive");
  if (!(absorption > 0.0 && absorption <= 1.0)) throw ParameterError("absorption must lie in (0, 1]");
  if (!(laser_power >= 0.0)) throw ParameterError("laser power must be non-negative");
  if (!(total_time > 0.0) || layers == 0 || layers > kGrid) throw ParameterError("bad build schedule");
  if (!(design_length > 0.0)) throw ParameterError("design length must be positive");
}

double cooling_time(const ProcessParams& p) {
  p.validate();
  const double t = p.layer_time() - p.print_time();
  if (!(t > 0.0)) {
    std::ostringstream msg;
    msg << "velocity " << p.velocity << " mm/s needs " << p.print_time() << " s per layer but only " << p.layer_time()
        << " s are available";
    throw ParameterError(msg.str());
  }
  return t;
}

void DepositionConfig::validate() const {
  if (!(pixel > 0.0) || !(depth > 0.0)) throw ParameterError("pixel size and depth must be positive");
  if (convection < 0.0 || emissivity < 0.0 || emissivity > 1.0) throw ParameterError("bad surface loss settings");
  if (!(stability > 0.0 && stability <= 1.0)) throw ParameterError("stability fraction must lie in (0, 1]");
  if (!(min_substep > 0.0)) throw ParameterError("minimum sub-step must be positive");
}

// ---------------------------------------------------------------- simulator

DepositionSimulator::DepositionSimulator(DepositionConfig cfg)
    : cfg_(cfg),
      enthalpy_(property_curve(P::c_p), Inconel625Table::latent_heat, Inconel625Table::solidus,
                Inconel625Table::liquidus, cfg.ambient),
      k_(property_curve(P::k)),
      e_(property_curve(P::E)),
      cte_(property_curve(P::cte)),
      yield_(property_curve(P::yield)) {
  cfg_.validate();
}

double DepositionSimulator::pixel_mass() const {
  return Inconel625Table::density * cfg_.pixel * cfg_.pixel * cfg_.depth;
}

double DepositionSimulator::stable_dt(double t_max, bool substrate) const {
  // Bound on the total conductance of one pixel against the smallest heat capacity.
  const double k_max = k_.max_value();
  const double tk = t_max + kKelvin;
  const double h_rad = cfg_.emissivity * kStefanBoltzmann * 4.0 * tk * tk * tk;
  double g = cfg_.depth * k_max * (4.0 + (substrate ? 2.0 : 0.0));
  g += 4.0 * cfg_.pixel * cfg_.depth * (cfg_.convection + h_rad);
  const double c_min = enthalpy_.specific_heat().min_value();
  return cfg_.stability * pixel_mass() * c_min / g;
}

void DepositionSimulator::exchange(const std::vector<std::uint8_t>& active, const std::vector<double>& t,
                                   const std::vector<double>& k, std::vector<double>& q, std::size_t rows) const {
  const double d = cfg_.depth;
  const double face = cfg_.pixel * cfg_.depth;
  const double eps = cfg_.emissivity;
  const double h = cfg_.convection;
  const double ta4 = std::pow(cfg_.ambient + kKelvin, 4);
  const std::size_t end = rows * kGrid;
  std::fill(q.begin(), q.begin() + end, 0.0);
  for (std::size_t p = 0; p < end; ++p) {
    if (!active[p]) continue;
    const std::size_t r = p / kGrid, c = p % kGrid;
    int exposed = 0;
    // right and upper faces are handled once per pair
    if (c + 1 < kGrid && active[p + 1]) {
      const double f = 0.5 * d * (k[p] + k[p + 1]) * (t[p + 1] - t[p]);
      q[p] += f;
      q[p + 1] -= f;
    } else {
      ++exposed;
    }
    if (r + 1 < rows && active[p + kGrid]) {
      const double f = 0.5 * d * (k[p] + k[p + kGrid]) * (t[p + kGrid] - t[p]);
      q[p] += f;
      q[p + kGrid] -= f;
    } else {
      ++exposed;
    }
    if (c == 0 || !active[p - 1]) ++exposed;
    if (r == 0) {
      if (cfg_.substrate_coupled) q[p] += 2.0 * d * k[p] * (cfg_.substrate - t[p]);
    } else if (!active[p - kGrid]) {
      ++exposed;
    }
    if (exposed > 0 && (h > 0.0 || eps > 0.0)) {
      const double tk = t[p] + kKelvin;
      const double flux = h * (t[p] - cfg_.ambient) + eps * kStefanBoltzmann * (tk * tk * tk * tk - ta4);
      q[p] -= exposed * face * flux;
    }
  }
}

AmSample DepositionSimulator::run(const DesignMask& mask, const ProcessParams& params, const Observer& observer) const {
  const double t_cool = cooling_time(params);
  const double t_print = params.print_time();
  const double mass = pixel_mass();
  const double h_solidus = enthalpy_.enthalpy(Inconel625Table::solidus);
  const double solidus = Inconel625Table::solidus;
  const double nu = Inconel625Table::poisson;

  std::vector<std::uint8_t> active(kPixels, 0);
  std::vector<double> temp(kPixels, 0.0), enth(kPixels, 0.0), sigma(kPixels, 0.0), k(kPixels, 0.0), q(kPixels, 0.0);
  double time = 0.0;

  auto march = [&](double duration, std::size_t layer, double laser_per_pixel) {
    const std::size_t row0 = layer * kGrid;
    const std::size_t end = row0 + kGrid;
    double remaining = duration;
    while (remaining > 1e-12 * duration) {
      double t_max = cfg_.ambient;
      for (std::size_t p = 0; p < end; ++p) {
        if (!active[p]) continue;
        t_max = std::max(t_max, temp[p]);
        k[p] = k_(temp[p]);
      }
      double dt = std::min(remaining, stable_dt(t_max, cfg_.substrate_coupled));
      if (dt < cfg_.min_substep && dt < remaining) throw SolverError("deposition sub-step fell below the refinement floor");
      exchange(active, temp, k, q, layer + 1);
      if (laser_per_pixel > 0.0) {
        for (std::size_t c = 0; c < kGrid; ++c)
          if (active[row0 + c]) q[row0 + c] += laser_per_pixel;
      }
      for (std::size_t p = 0; p < end; ++p) {
        if (!active[p]) continue;
        enth[p] += dt * q[p] / mass;
        const double t_old = temp[p];
        const double t_new = enthalpy_.temperature(enth[p]);
        if (!std::isfinite(t_new)) throw SolverError("non-finite temperature in deposition step");
        temp[p] = t_new;
        if (t_new >= solidus) {
          sigma[p] = 0.0;
        } else {
          const double t_mid = 0.5 * (std::min(t_old, solidus) + t_new);
          const double d_t = t_new - std::min(t_old, solidus);
          const double cap = yield_(t_new);
          sigma[p] = std::clamp(sigma[p] + e_(t_mid) * cte_(t_mid) * d_t / (1.0 - nu), -cap, cap);
        }
      }
      time += dt;
      remaining -= dt;
      if (observer) observer(Substep{time, dt, layer, laser_per_pixel > 0.0, &temp, &sigma, &active});
    }
  };

  const double power = params.absorption * params.laser_power;
  for (std::size_t layer = 0; layer < params.layers; ++layer) {
    std::size_t n_row = 0;
    for (std::size_t c = 0; c < kGrid; ++c) {
      const std::size_t p = layer * kGrid + c;
      if (!mask.cells[p]) continue;
      active[p] = 1;
      temp[p] = solidus;
      enth[p] = h_solidus;
      sigma[p] = 0.0;
      ++n_row;
    }
    march(t_print, layer, n_row > 0 ? power / static_cast<double>(n_row) : 0.0);
    march(t_cool, layer, 0.0);
  }

  AmSample out;
  out.mask = mask;
  out.velocity = params.velocity;
  out.temperature.assign(kPixels, 0.0);
  out.stress.assign(kPixels, 0.0);
  for (std::size_t p = 0; p < kPixels; ++p) {
    if (!mask.cells[p]) continue;
    out.temperature[p] = temp[p];
    out.stress[p] = std::abs(sigma[p]);
  }
  return out;
}

std::vector<double> DepositionSimulator::relax(const DesignMask& mask, std::vector<double> temperature,
                                               double duration) const {
  if (temperature.size() != kPixels) throw DimensionError("relax expects a 64x64 temperature field");
  const double mass = pixel_mass();
  std::vector<std::uint8_t> active = mask.cells;
  std::vector<double> enth(kPixels, 0.0), k(kPixels, 0.0), q(kPixels, 0.0);
  for (std::size_t p = 0; p < kPixels; ++p)
    if (active[p]) enth[p] = enthalpy_.enthalpy(temperature[p]);
  auto total = [&] {
    double e = 0.0;
    for (std::size_t p = 0; p < kPixels; ++p)
      if (active[p]) e += mass * enth[p];
    return e;
  };
  std::vector<double> history{total()};
  double remaining = duration;
  while (remaining > 1e-12 * duration) {
    double t_max = cfg_.ambient;
    for (std::size_t p = 0; p < kPixels; ++p)
      if (active[p]) {
        t_max = std::max(t_max, temperature[p]);
        k[p] = k_(temperature[p]);
      }
    const double dt = std::min(remaining, stable_dt(t_max, cfg_.substrate_coupled));
    exchange(active, temperature, k, q, kGrid);
    for (std::size_t p = 0; p < kPixels; ++p)
      if (active[p]) {
        enth[p] += dt * q[p] / mass;
        temperature[p] = enthalpy_.temperature(enth[p]);
      }
    remaining -= dt;
    history.push_back(total());
  }
  return history;
}

AmSample simulate_deposition(const DesignMask& mask, const ProcessParams& params, const DepositionConfig& cfg) {
  return DepositionSimulator(cfg).run(mask, params);
}

}  // namespace odn::am
