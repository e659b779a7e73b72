#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "odn/core/piecewise.hpp"
#include "odn/core/rng.hpp"

namespace odn::am {

inline constexpr std::size_t kGrid = 64;
inline constexpr std::size_t kPixels = kGrid * kGrid;

/// Inconel 625 properties; the temperature rows are interpolated linearly and
/// held constant outside [20, 870] deg C.
struct Inconel625Table {
  enum class Property { k, c_p, cte, E, yield };

  static constexpr std::array<double, 9> temperature{20, 93, 205, 315, 425, 540, 650, 760, 870};
  static constexpr std::array<double, 9> conductivity{9.9, 10.8, 12.5, 14.1, 15.7, 17.5, 19.0, 20.8, 22.8};
  static constexpr std::array<double, 9> specific_heat{4.10, 4.27, 4.56, 4.81, 5.11, 5.36, 5.65, 5.90, 6.20};
  static constexpr std::array<double, 9> expansion{1.28, 1.28, 1.31, 1.33, 1.37, 1.40, 1.48, 1.53, 1.58};
  static constexpr std::array<double, 9> modulus{2.08, 2.04, 1.98, 1.92, 1.86, 1.79, 1.70, 1.61, 1.48};
  static constexpr std::array<double, 9> yield{493, 479, 443, 430, 424, 423, 422, 415, 386};

  static constexpr double density = 8440.0;   // kg/m^3
  static constexpr double solidus = 1290.0;   // deg C
  static constexpr double liquidus = 1350.0;  // deg C
  static constexpr double latent_heat = 2.72e5;  // J/kg
  static constexpr double poisson = 0.366;
};

/// Property in SI-style units: k W/(m K), c_p J/(kg K), CTE 1/K, E MPa, yield MPa.
double lookup_property(double temperature_c, Inconel625Table::Property which);
PiecewiseLinear property_curve(Inconel625Table::Property which);

/// 64 x 64 material mask; row 0 sits on the build plate.
struct DesignMask {
  std::vector<std::uint8_t> cells = std::vector<std::uint8_t>(kPixels, 0);

  bool at(std::size_t row, std::size_t col) const { return cells[row * kGrid + col] != 0; }
  double volume_fraction() const;
  /// Every material pixel 4-connected to row 0.
  bool base_connected() const;
};

struct DesignConfig {
  double vf_tolerance = 0.02;
  double smoothing = 3.0;  // Gaussian blur sigma in pixels
  int max_retries = 20;
};

/// Thresholded smooth random field restricted to its base-connected part.
/// vf_target must lie in [0.3, 0.7]; exactly 1.0 returns the full mask.
DesignMask generate_design(Rng& rng, double vf_target, const DesignConfig& cfg = {});

struct ProcessParams {
  double velocity = 12.5;      // mm/s
  double laser_power = 3000.0;  // W
  double absorption = 0.4;
  double total_time = 685.0;  // s
  std::size_t layers = 64;
  double design_length = 64.0;  // mm

  void validate() const;
  double layer_time() const { return total_time / static_cast<double>(layers); }
  double print_time() const { return design_length / velocity; }
};

/// Per-layer dwell after printing: t_total / layers - length / velocity.
double cooling_time(const ProcessParams& p);

struct DepositionConfig {
  double pixel = 1e-3;            // m
  double depth = 0.045;           // out-of-plane slab depth, m
  double convection = 18.0;       // W/(m^2 K)
  double emissivity = 0.28;
  double ambient = 26.0;          // deg C
  double substrate = 26.0;        // deg C
  bool substrate_coupled = true;
  double stability = 0.9;         // fraction of the explicit limit
  double min_substep = 1e-6;      // s

  void validate() const;
};

struct AmSample {
  DesignMask mask;
  double velocity = 0.0;
  std::vector<double> temperature;  // 0 on void
  std::vector<double> stress;       // |sigma|, 0 on void
};

class DepositionSimulator {
 public:
  struct Substep {
    double time = 0.0;
    double dt = 0.0;
    std::size_t layer = 0;
    bool laser_on = false;
    const std::vector<double>* temperature = nullptr;
    const std::vector<double>* stress = nullptr;
    const std::vector<std::uint8_t>* active = nullptr;
  };
  using Observer = std::function<void(const Substep&)>;

  DepositionSimulator(DepositionConfig cfg = {});

  AmSample run(const DesignMask& mask, const ProcessParams& params, const Observer& observer = {}) const;

  /// Explicit conduction only (no deposition, no laser), used to audit the
  /// energy bookkeeping. Returns the total enthalpy sum(m H) after each sub-step.
  std::vector<double> relax(const DesignMask& mask, std::vector<double> temperature, double duration) const;

  double pixel_mass() const;
  double enthalpy(double temperature_c) const { return enthalpy_.enthalpy(temperature_c); }

 private:
  double stable_dt(double k_max, bool substrate) const;
  void exchange(const std::vector<std::uint8_t>& active, const std::vector<double>& t, const std::vector<double>& k,
                std::vector<double>& q, std::size_t rows) const;

  DepositionConfig cfg_;
  EnthalpyCurve enthalpy_;
  PiecewiseLinear k_, e_, cte_, yield_;
};

AmSample simulate_deposition(const DesignMask& mask, const ProcessParams& params, const DepositionConfig& cfg = {});

}  // namespace odn::am
