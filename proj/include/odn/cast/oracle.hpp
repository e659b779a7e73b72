#pragma once

#include "odn/cast/steel.hpp"

namespace odn::cast {

struct RampOutcome {
  double stress = 0.0;     // MPa
  double inelastic = 0.0;  // signed accumulated inelastic strain
};

/// Total strain rising at `strain_rate` for ten steps of `dt` at fixed
/// temperature, integrated by the solver's bounded Newton update.
RampOutcome ramp_bounded(Law law, double temperature_c, double strain_rate, double dt, double carbon_pct = 0.09);

/// The same ramp by forward Euler on dt/1000 sub-steps, with the creep laws
/// written out independently of the solver's implementation.
RampOutcome ramp_explicit(Law law, double temperature_c, double strain_rate, double dt, double carbon_pct = 0.09);

}  // namespace odn::cast
