#pragma once

#include <string>

#include "odn/core/piecewise.hpp"

namespace odn::cast {

struct SteelGrade {
  double carbon_pct = 0.09;
  double solidus = 1480.0;   // deg C
  double liquidus = 1520.7;  // deg C
  /// Below this temperature the solid holds no delta-ferrite.
  double delta_transition = 1400.0;

  void validate() const;
};

struct PhaseFractions {
  double liquid = 0.0;
  double delta = 0.0;
  double austenite = 0.0;

  /// Delta-ferrite share of the solid; 0 when nothing is solid.
  double delta_share_of_solid() const;
};

/// Lever rule for the liquid; the solid's delta share falls linearly from 1 at
/// the solidus to 0 at the delta transition temperature.
PhaseFractions phase_fractions(double temperature_c, const SteelGrade& grade);

enum class Law { kozlowski, zhu, mushy };
const char* to_string(Law law);

Law select_law(const PhaseFractions& phases);

struct KozlowskiCoefficients {
  double f1, f2, f3, fc;
};
KozlowskiCoefficients kozlowski_coefficients(double temperature_k, double carbon_pct);

struct ZhuCoefficients {
  double f_delta_c, m, n;
};
ZhuCoefficients zhu_coefficients(double temperature_k, double carbon_pct);

/// Inelastic strain rate (1/s) and its partial derivatives with respect to
/// stress and accumulated inelastic strain.
struct CreepRate {
  double rate = 0.0;
  double d_stress = 0.0;
  double d_strain = 0.0;
};

inline constexpr double kKozlowskiQ = 44465.0;

/// Kozlowski austenite law; stress in MPa, temperature in K. A non-positive
/// base (stress below the hardening term) gives zero rate.
CreepRate kozlowski_rate(double stress, double accumulated, double temperature_k, double carbon_pct);
/// Zhu delta-ferrite power law; stress in MPa, temperature in K.
CreepRate zhu_rate(double stress, double accumulated, double temperature_k, double carbon_pct);
CreepRate creep_rate(Law law, double stress, double accumulated, double temperature_k, double carbon_pct);

inline double to_kelvin(double celsius) { return celsius + 273.15; }

/// Temperature-dependent thermophysical and elastic properties of the slice.
struct MaterialCurves {
  PiecewiseLinear conductivity;   // W/(m K)
  double density = 7400.0;        // kg/m^3
  EnthalpyCurve enthalpy;         // J/kg, latent heat included
  PiecewiseLinear elastic_modulus;  // MPa
  PiecewiseLinear expansion;      // 1/K
  double mushy_yield = 0.01;      // MPa

  /// Thermal strain accumulated from the solidus down (or up) to T.
  double thermal_strain(double temperature_c) const;
};

/// Built-in plain-carbon steel defaults; identical to data/steel_properties.txt.
MaterialCurves default_steel_curves(const SteelGrade& grade);
/// Reads the "key: T1 v1 T2 v2 ..." property file format.
MaterialCurves load_steel_curves(const std::string& path, const SteelGrade& grade);

}  // namespace odn::cast
