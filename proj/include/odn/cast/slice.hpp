#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "odn/cast/steel.hpp"
#include "odn/profile/profile.hpp"

namespace odn::cast {

struct CastConfig {
  SteelGrade grade;
  std::size_t nodes = 64;
  double thickness = 0.030;  // m
  double duration = 20.0;    // s
  std::size_t steps = 400;
  double initial_temperature = 1550.0;  // deg C
  /// Net lateral force per unit displacement, MPa m per mm, scaled by the solid fraction.
  double coupling = -0.05;
  enum class RightBoundary { adiabatic, fixed_temperature };
  RightBoundary right_boundary = RightBoundary::adiabatic;
  double right_temperature = 1550.0;
  double thermal_tolerance = 1e-8;  // relative residual
  std::size_t max_newton = 60;
  double force_tolerance = 1e-12;  // MPa m, i.e. 1e-6 N/m
  std::string properties_path;     // empty: built-in steel defaults

  void validate() const;
  double time_step() const { return duration / static_cast<double>(steps); }
};

struct SliceState {
  std::vector<double> x;       // m
  std::vector<double> weight;  // control-volume length, m
  std::vector<double> temperature;
  std::vector<double> enthalpy;
  std::vector<double> stress;       // sigma_22, MPa
  std::vector<double> inelastic;    // signed
  std::vector<double> accumulated;  // magnitude
  std::vector<PhaseFractions> phases;
  std::vector<Law> laws;
  double lateral_strain = 0.0;
  double time = 0.0;

  std::size_t size() const { return x.size(); }
};

struct ConstitutiveInput {
  Law law = Law::kozlowski;
  double temperature_c = 0.0;
  double modulus = 0.0;       // MPa
  double trial_strain = 0.0;  // total - thermal - old inelastic
  double accumulated = 0.0;
  double dt = 0.0;
  double carbon_pct = 0.09;
  double mushy_yield = 0.01;
};

struct ConstitutiveResult {
  double stress = 0.0;
  double inelastic_increment = 0.0;  // signed
  double tangent = 0.0;              // d stress / d total strain
  int iterations = 0;
};

/// Backward-Euler return to the creep law (bounded Newton with bisection
/// safeguard) or the perfectly-plastic mushy clamp.
ConstitutiveResult integrate_constitutive(const ConstitutiveInput& in);

struct ThermalReport {
  double stored = 0.0;    // rho * sum V (H_new - H_old), J/m^2
  double boundary = 0.0;  // dt * q, J/m^2
  int iterations = 0;
};

struct MechanicalReport {
  double target = 0.0;    // MPa m
  double residual = 0.0;  // MPa m
  int iterations = 0;
};

struct StepRecord {
  std::size_t step = 0;
  const SliceState* state = nullptr;
  ThermalReport thermal;
  MechanicalReport mechanical;
};

struct CastingSample {
  std::vector<double> x;
  std::vector<double> temperature;
  std::vector<double> stress;     // sigma_22
  std::vector<double> von_mises;  // |sigma_22|
  bool ok = false;
  std::string failure;
};

class CastingSolver {
 public:
  explicit CastingSolver(CastConfig cfg);
  CastingSolver(CastConfig cfg, MaterialCurves curves);

  const CastConfig& config() const noexcept { return cfg_; }
  const MaterialCurves& curves() const noexcept { return curves_; }

  SliceState initial_state() const;
  /// Implicit enthalpy step; q is the heat flux leaving the left face, W/m^2.
  ThermalReport thermal_step(SliceState& s, double q, double dt) const;
  /// Finds the uniform lateral strain whose net force equals `target_force`.
  MechanicalReport mechanical_step(SliceState& s, double target_force, double dt, std::size_t step = 0) const;
  /// Solid length fraction (nodes with no liquid).
  double solid_fraction(const SliceState& s) const;

  CastingSample run(const TimeSeriesProfile& flux, const TimeSeriesProfile& displacement,
                    const std::function<void(const StepRecord&)>& observer = {}) const;

 private:
  double net_force(const SliceState& s, double strain, double dt, double* stiffness,
                   std::vector<ConstitutiveResult>* out) const;

  CastConfig cfg_;
  MaterialCurves curves_;
};

}  // namespace odn::cast
