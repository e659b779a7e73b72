#include "odn/cast/slice.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "odn/core/error.hpp"

namespace odn::cast {

void CastConfig::validate() const {
  grade.validate();
  if (nodes < 3) throw ConfigError("cast.nodes must be at least 3");
  if (!(thickness > 0.0)) throw ConfigError("cast.thickness must be positive");
  if (!(duration > 0.0)) throw ConfigError("cast.duration must be positive");
  if (steps == 0) throw ConfigError("cast.steps must be positive");
  if (!(thermal_tolerance > 0.0) || !(force_tolerance > 0.0)) throw ConfigError("solver tolerances must be positive");
  if (max_newton == 0) throw ConfigError("cast.max_newton must be positive");
}

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

// Solves R(x) = x - dt * rate(E (e - x), acc + x) = 0 on [0, e]. R is
// increasing, R(0) <= 0 and R(e) = e >= 0, so the root is always bracketed.
ConstitutiveResult integrate_creep(const ConstitutiveInput& in) {
  ConstitutiveResult out;
  const double sign = in.trial_strain < 0.0 ? -1.0 : 1.0;
  const double e = std::fabs(in.trial_strain);
  const double tk = to_kelvin(in.temperature_c);
  const double E = in.modulus;

  auto eval = [&](double x, CreepRate& r) {
    r = creep_rate(in.law, E * (e - x), in.accumulated + x, tk, in.carbon_pct);
    return x - in.dt * r.rate;
  };

  CreepRate r{};
  double x = 0.0;
  double f = eval(x, r);
  if (f < 0.0) {
    double lo = 0.0, hi = e;
    CreepRate rhi{};
    const double fhi = eval(hi, rhi);
    if (!(f <= 0.0 && fhi >= 0.0)) {
      throw SolverError("constitutive residual not bracketed (R(0) = " + std::to_string(f) +
                        ", R(e) = " + std::to_string(fhi) + ")");
    }
    const double xacc = 4.0 * kEps * e;
    double dx_old = hi - lo, dx = dx_old;
    for (int it = 1;; ++it) {
      if (it > 500) throw SolverError("constitutive integration did not converge");
      out.iterations = it;
      const double df = 1.0 + in.dt * E * r.d_stress - in.dt * r.d_strain;
      const bool newton_ok = std::isfinite(df) && df > 0.0 && ((x - hi) * df - f) * ((x - lo) * df - f) < 0.0 &&
                             std::fabs(2.0 * f) <= std::fabs(dx_old * df);
      dx_old = dx;
      if (newton_ok) {
        dx = f / df;
        x -= dx;
      } else {
        dx = 0.5 * (hi - lo);
        x = lo + dx;
      }
      if (std::fabs(dx) <= xacc) break;
      f = eval(x, r);
      if (f == 0.0) break;
      if (f < 0.0) {
        lo = x;
      } else {
        hi = x;
      }
      if (hi - lo <= xacc) break;
    }
    eval(x, r);
  }
  out.stress = sign * E * (e - x);
  out.inelastic_increment = sign * x;
  const double df = 1.0 + in.dt * E * r.d_stress - in.dt * r.d_strain;
  const double dxde = (std::isfinite(df) && df > 0.0) ? in.dt * E * r.d_stress / df : 1.0;
  out.tangent = E * std::clamp(1.0 - dxde, 0.0, 1.0);
  return out;
}

}  // namespace

ConstitutiveResult integrate_constitutive(const ConstitutiveInput& in) {
  if (!(in.dt > 0.0)) throw SolverError("constitutive integration needs a positive time step");
  if (!(in.modulus > 0.0)) throw SolverError("constitutive integration needs a positive modulus");
  if (in.law != Law::mushy) return integrate_creep(in);
  ConstitutiveResult out;
  const double trial = in.modulus * in.trial_strain;
  if (std::fabs(trial) <= in.mushy_yield) {
    out.stress = trial;
    out.tangent = in.modulus;
    return out;
  }
  out.stress = std::copysign(in.mushy_yield, trial);
  out.inelastic_increment = in.trial_strain - out.stress / in.modulus;
  out.tangent = 0.0;
  return out;
}

CastingSolver::CastingSolver(CastConfig cfg)
    : CastingSolver(cfg, cfg.properties_path.empty() ? default_steel_curves(cfg.grade)
                                                     : load_steel_curves(cfg.properties_path, cfg.grade)) {}

CastingSolver::CastingSolver(CastConfig cfg, MaterialCurves curves) : cfg_(std::move(cfg)), curves_(std::move(curves)) {
  cfg_.validate();
}

SliceState CastingSolver::initial_state() const {
  const std::size_t n = cfg_.nodes;
  const double dx = cfg_.thickness / static_cast<double>(n - 1);
  SliceState s;
  s.x.resize(n);
  s.weight.assign(n, dx);
  s.weight.front() = s.weight.back() = 0.5 * dx;
  for (std::size_t i = 0; i < n; ++i) s.x[i] = dx * static_cast<double>(i);
  s.temperature.assign(n, cfg_.initial_temperature);
  if (cfg_.right_boundary == CastConfig::RightBoundary::fixed_temperature) {
    s.temperature.back() = cfg_.right_temperature;
  }
  s.enthalpy.resize(n);
  s.phases.resize(n);
  s.laws.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    s.enthalpy[i] = curves_.enthalpy.enthalpy(s.temperature[i]);
    s.phases[i] = phase_fractions(s.temperature[i], cfg_.grade);
    s.laws[i] = select_law(s.phases[i]);
  }
  s.stress.assign(n, 0.0);
  s.accumulated.assign(n, 0.0);
  // stress-free start: the inelastic strain absorbs each node's thermal strain
  s.inelastic.resize(n);
  for (std::size_t i = 0; i < n; ++i) s.inelastic[i] = -curves_.thermal_strain(s.temperature[i]);
  return s;
}

ThermalReport CastingSolver::thermal_step(SliceState& s, double q, double dt) const {
  if (!(dt > 0.0)) throw SolverError("thermal step needs a positive time step");
  if (!(q >= 0.0)) throw SolverError("boundary flux must be non-negative (leaving the domain)");
  const std::size_t n = s.size();
  const double dx = s.x[1] - s.x[0];
  const double rho = curves_.density;
  const bool fixed_right = cfg_.right_boundary == CastConfig::RightBoundary::fixed_temperature;
  const EnthalpyCurve& hc = curves_.enthalpy;

  std::vector<double> g(n - 1);  // face conductances, lagged at the old temperature
  for (std::size_t i = 0; i + 1 < n; ++i) {
    g[i] = 0.5 * (curves_.conductivity(s.temperature[i]) + curves_.conductivity(s.temperature[i + 1])) / dx;
  }
  const std::vector<double> h_old = s.enthalpy;
  std::vector<double> t = s.temperature, h(n), r(n), a(n), b(n), c(n), d(n);

  ThermalReport rep;
  for (int it = 0;; ++it) {
    double scale = q, rmax = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      h[i] = hc.enthalpy(t[i]);
      const double store = rho * s.weight[i] * (h[i] - h_old[i]) / dt;
      const double right = i + 1 < n ? g[i] * (t[i + 1] - t[i]) : 0.0;
      const double left = i > 0 ? g[i - 1] * (t[i] - t[i - 1]) : 0.0;
      r[i] = store - right + left + (i == 0 ? q : 0.0);
      scale = std::max({scale, std::fabs(store), std::fabs(right)});
    }
    if (fixed_right) r[n - 1] = 0.0;
    for (double v : r) rmax = std::max(rmax, std::fabs(v));
    if (rmax <= cfg_.thermal_tolerance * scale) {
      rep.iterations = it;
      break;
    }
    if (static_cast<std::size_t>(it) >= cfg_.max_newton) {
      throw SolverError("thermal Newton did not converge (residual " + std::to_string(rmax / scale) + ")");
    }
    // tridiagonal Jacobian
    for (std::size_t i = 0; i < n; ++i) {
      const double cap = rho * s.weight[i] * hc.slope(t[i]) / dt;
      a[i] = i > 0 ? -g[i - 1] : 0.0;
      c[i] = i + 1 < n ? -g[i] : 0.0;
      b[i] = cap + (i > 0 ? g[i - 1] : 0.0) + (i + 1 < n ? g[i] : 0.0);
      d[i] = -r[i];
    }
    if (fixed_right) {
      a[n - 1] = 0.0;
      b[n - 1] = 1.0;
      d[n - 1] = 0.0;
    }
    for (std::size_t i = 1; i < n; ++i) {
      const double m = a[i] / b[i - 1];
      b[i] -= m * c[i - 1];
      d[i] -= m * d[i - 1];
    }
    d[n - 1] /= b[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) d[i] = (d[i] - c[i] * d[i + 1]) / b[i];
    // linearised enthalpy update mapped back through T(H) keeps latent-heat jumps stable
    for (std::size_t i = 0; i < n; ++i) {
      const double h_lin = h[i] + hc.slope(t[i]) * d[i];
      t[i] = hc.temperature(h_lin);
    }
  }
  double stored = 0.0;
  for (std::size_t i = 0; i < n; ++i) stored += rho * s.weight[i] * (h[i] - h_old[i]);
  s.temperature = t;
  s.enthalpy = h;
  rep.stored = stored;
  rep.boundary = dt * q;
  return rep;
}

double CastingSolver::solid_fraction(const SliceState& s) const {
  double solid = 0.0, total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    total += s.weight[i];
    if (s.phases[i].liquid == 0.0) solid += s.weight[i];
  }
  return solid / total;
}

double CastingSolver::net_force(const SliceState& s, double strain, double dt, double* stiffness,
                                std::vector<ConstitutiveResult>* out) const {
  double force = 0.0, k = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    ConstitutiveInput in;
    in.law = s.laws[i];
    in.temperature_c = s.temperature[i];
    in.modulus = curves_.elastic_modulus(s.temperature[i]);
    in.trial_strain = strain - curves_.thermal_strain(s.temperature[i]) - s.inelastic[i];
    in.accumulated = s.laws[i] == Law::mushy ? 0.0 : s.accumulated[i];
    in.dt = dt;
    in.carbon_pct = cfg_.grade.carbon_pct;
    in.mushy_yield = curves_.mushy_yield;
    ConstitutiveResult res;
    try {
      res = integrate_constitutive(in);
    } catch (const SolverError& e) {
      throw SolverError(std::string(e.what()) + " at node " + std::to_string(i));
    }
    force += s.weight[i] * res.stress;
    k += s.weight[i] * res.tangent;
    if (out) (*out)[i] = res;
  }
  if (stiffness) *stiffness = k;
  return force;
}

MechanicalReport CastingSolver::mechanical_step(SliceState& s, double target, double dt, std::size_t step) const {
  const std::size_t n = s.size();
  for (std::size_t i = 0; i < n; ++i) {
    s.phases[i] = phase_fractions(s.temperature[i], cfg_.grade);
    s.laws[i] = select_law(s.phases[i]);
  }
  auto fail = [&](const std::string& why) {
    return SolverError("mechanical step " + std::to_string(step) + ": " + why);
  };
  MechanicalReport rep;
  rep.target = target;
  const double tol = cfg_.force_tolerance;

  // start from the strain that keeps the mean thermal contraction force-free
  double guess = s.lateral_strain;
  double k = 0.0;
  double f = 0.0;
  try {
    f = net_force(s, guess, dt, &k, nullptr) - target;
  } catch (const SolverError& e) {
    throw fail(e.what());
  }
  double lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
  double x = guess;
  int it = 0;
  for (;; ++it) {
    if (std::fabs(f) <= tol) break;
    if (it > 200) throw fail("lateral force did not converge (residual " + std::to_string(f) + ")");
    if (f < 0.0) {
      lo = std::max(lo, x);
    } else {
      hi = std::min(hi, x);
    }
    double next;
    const bool bracketed = std::isfinite(lo) && std::isfinite(hi);
    if (k > 0.0) {
      next = x - f / k;
      if (bracketed && !(next > lo && next < hi)) next = 0.5 * (lo + hi);
    } else if (bracketed) {
      next = 0.5 * (lo + hi);
    } else {
      // flat force response: march outwards until the sign changes
      const double step_size = std::max(1e-4, 2.0 * std::fabs(x - guess));
      next = f < 0.0 ? x + step_size : x - step_size;
      if (std::fabs(next - guess) > 1.0) throw fail("no bracketing lateral strain found");
    }
    if (bracketed && hi - lo <= 4.0 * kEps * std::max(std::fabs(lo), std::fabs(hi))) {
      throw fail("bracket collapsed with residual " + std::to_string(f));
    }
    x = next;
    try {
      f = net_force(s, x, dt, &k, nullptr) - target;
    } catch (const SolverError& e) {
      throw fail(e.what());
    }
  }
  std::vector<ConstitutiveResult> res(n);
  rep.residual = net_force(s, x, dt, nullptr, &res) - target;
  rep.iterations = it;
  s.lateral_strain = x;
  for (std::size_t i = 0; i < n; ++i) {
    s.stress[i] = res[i].stress;
    s.inelastic[i] += res[i].inelastic_increment;
    s.accumulated[i] = s.laws[i] == Law::mushy ? 0.0 : s.accumulated[i] + std::fabs(res[i].inelastic_increment);
  }
  return rep;
}

CastingSample CastingSolver::run(const TimeSeriesProfile& flux, const TimeSeriesProfile& displacement,
                                 const std::function<void(const StepRecord&)>& observer) const {
  if (flux.duration != displacement.duration) throw ParameterError("flux and displacement durations differ");
  CastingSample out;
  SliceState s = initial_state();
  const double dt = flux.duration / static_cast<double>(cfg_.steps);
  try {
    for (std::size_t k = 0; k < cfg_.steps; ++k) {
      const double t_new = dt * static_cast<double>(k + 1);
      StepRecord rec;
      rec.step = k;
      rec.thermal = thermal_step(s, flux.at(t_new) * 1e6, dt);
      for (std::size_t i = 0; i < s.size(); ++i) s.phases[i] = phase_fractions(s.temperature[i], cfg_.grade);
      const double target = cfg_.coupling * displacement.at(t_new) * solid_fraction(s);
      rec.mechanical = mechanical_step(s, target, dt, k);
      s.time = t_new;
      rec.state = &s;
      if (observer) observer(rec);
    }
  } catch (const SolverError& e) {
    out.failure = e.what();
    return out;
  }
  out.x = s.x;
  out.temperature = s.temperature;
  out.stress = s.stress;
  out.von_mises.resize(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out.von_mises[i] = std::fabs(s.stress[i]);
  out.ok = true;
  return out;
}

}  // namespace odn::cast
