#include "odn/cast/steel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "odn/core/error.hpp"

namespace odn::cast {

void SteelGrade::validate() const {
  if (!(carbon_pct > 0.0 && carbon_pct < 1.0)) throw ParameterError("carbon content must lie in (0, 1) wt%");
  if (!(solidus < liquidus)) throw ParameterError("solidus must be below liquidus");
  if (!(delta_transition < solidus)) throw ParameterError("delta transition must be below the solidus");
}

double PhaseFractions::delta_share_of_solid() const {
  const double solid = delta + austenite;
  return solid > 0.0 ? delta / solid : 0.0;
}

PhaseFractions phase_fractions(double t, const SteelGrade& grade) {
  if (!std::isfinite(t)) throw DomainError("phase_fractions: non-finite temperature");
  PhaseFractions p;
  p.liquid = std::clamp((t - grade.solidus) / (grade.liquidus - grade.solidus), 0.0, 1.0);
  const double solid = 1.0 - p.liquid;
  const double share =
      std::clamp((t - grade.delta_transition) / (grade.solidus - grade.delta_transition), 0.0, 1.0);
  p.delta = solid * share;
  p.austenite = solid - p.delta;
  return p;
}

const char* to_string(Law law) {
  switch (law) {
    case Law::kozlowski: return "kozlowski";
    case Law::zhu: return "zhu";
    case Law::mushy: return "mushy";
  }
  return "?";
}

Law select_law(const PhaseFractions& phases) {
  if (phases.liquid > 0.0) return Law::mushy;
  if (phases.delta_share_of_solid() > 0.10) return Law::zhu;
  return Law::kozlowski;
}

KozlowskiCoefficients kozlowski_coefficients(double tk, double c) {
  return {130.5 - 5.128e-3 * tk, -0.6289 + 1.114e-3 * tk, 8.132 - 1.54e-3 * tk, 46550.0 - 71400.0 * c + 12000.0 * c * c};
}

ZhuCoefficients zhu_coefficients(double tk, double c) {
  return {1.3678e4 * std::pow(c, -5.56e-2), -9.4156e-5 * tk + 0.3495, 1.0 / (1.617e-4 * tk - 0.06166)};
}

CreepRate kozlowski_rate(double stress, double accumulated, double tk, double carbon) {
  if (!(tk > 0.0)) throw DomainError("kozlowski_rate: temperature must be positive kelvin");
  const auto k = kozlowski_coefficients(tk, carbon);
  const double eb = accumulated;
  const double hardening = eb == 0.0 ? 0.0 : k.f1 * eb * std::pow(std::fabs(eb), k.f2 - 1.0);
  const double base = stress - hardening;
  CreepRate r;
  if (base <= 0.0) return r;
  r.rate = k.fc * std::pow(base, k.f3) * std::exp(-kKozlowskiQ / tk);
  r.d_stress = k.f3 * r.rate / base;
  if (eb != 0.0) r.d_strain = -r.d_stress * k.f1 * k.f2 * std::pow(std::fabs(eb), k.f2 - 1.0);
  return r;
}

CreepRate zhu_rate(double stress, double accumulated, double tk, double carbon) {
  if (!(tk > 0.0)) throw DomainError("zhu_rate: temperature must be positive kelvin");
  const auto z = zhu_coefficients(tk, carbon);
  CreepRate r;
  if (stress == 0.0) return r;
  const double hard = 1.0 + 1000.0 * accumulated;
  const double denom = z.f_delta_c * std::pow(tk / 300.0, -5.52) * std::pow(hard, z.m);
  r.rate = 0.1 * std::pow(std::fabs(stress / denom), z.n);
  r.d_stress = z.n * r.rate / std::fabs(stress);
  r.d_strain = -z.n * z.m * 1000.0 / hard * r.rate;
  return r;
}

CreepRate creep_rate(Law law, double stress, double accumulated, double tk, double carbon) {
  switch (law) {
    case Law::kozlowski: return kozlowski_rate(stress, accumulated, tk, carbon);
    case Law::zhu: return zhu_rate(stress, accumulated, tk, carbon);
    case Law::mushy: break;
  }
  throw ParameterError("the mushy law has no creep rate");
}

double MaterialCurves::thermal_strain(double t) const {
  return expansion.integral(enthalpy.solidus(), t);
}

namespace {

PiecewiseLinear table(const std::vector<double>& pairs, const std::string& key) {
  if (pairs.size() < 2 || pairs.size() % 2 != 0) throw ConfigError("property '" + key + "' needs T/value pairs");
  std::vector<double> t, v;
  for (std::size_t i = 0; i < pairs.size(); i += 2) {
    t.push_back(pairs[i]);
    v.push_back(pairs[i + 1]);
  }
  return PiecewiseLinear(std::move(t), std::move(v));
}

MaterialCurves build(std::map<std::string, std::vector<double>> kv, const SteelGrade& grade) {
  for (const char* key : {"density", "latent_heat", "mushy_yield", "conductivity", "specific_heat",
                          "elastic_modulus", "expansion"}) {
    if (!kv.count(key)) throw ConfigError(std::string("steel property file lacks '") + key + "'");
  }
  grade.validate();
  MaterialCurves m;
  m.density = kv["density"].at(0);
  m.mushy_yield = kv["mushy_yield"].at(0);
  m.conductivity = table(kv["conductivity"], "conductivity");
  m.elastic_modulus = table(kv["elastic_modulus"], "elastic_modulus");
  m.expansion = table(kv["expansion"], "expansion");
  m.enthalpy = EnthalpyCurve(table(kv["specific_heat"], "specific_heat"), kv["latent_heat"].at(0), grade.solidus,
                             grade.liquidus, 20.0);
  if (!(m.density > 0.0) || !(m.mushy_yield > 0.0) || m.conductivity.min_value() <= 0.0 ||
      m.elastic_modulus.min_value() <= 0.0) {
    throw ConfigError("steel properties must be positive");
  }
  return m;
}

}  // namespace

MaterialCurves default_steel_curves(const SteelGrade& grade) {
  return build({{"density", {7400}},
                {"latent_heat", {271000}},
                {"mushy_yield", {0.01}},
                {"conductivity", {20, 50, 800, 27, 1480, 33, 1520.7, 40, 1600, 40}},
                {"specific_heat", {20, 480, 750, 800, 900, 650, 1600, 690}},
                {"elastic_modulus", {20, 210000, 800, 120000, 1000, 60000, 1200, 30000, 1400, 14000, 1480, 10000,
                                     1600, 10000}},
                {"expansion", {20, 1.2e-5, 900, 2.0e-5, 1480, 2.3e-5, 1600, 2.3e-5}}},
               grade);
}

MaterialCurves load_steel_curves(const std::string& path, const SteelGrade& grade) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open steel property file " + path);
  std::map<std::string, std::vector<double>> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    std::string key;
    if (!(ss >> key)) continue;
    std::vector<double> values;
    double v;
    while (ss >> v) values.push_back(v);
    if (!ss.eof()) throw ConfigError("malformed number in steel property '" + key + "'");
    kv[key] = std::move(values);
  }
  return build(std::move(kv), grade);
}

}  // namespace odn::cast
