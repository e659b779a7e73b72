#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace odn::metrics {

using Field = std::vector<double>;

double mae(std::span<const double> truth, std::span<const double> pred);
/// Percent; throws MetricError when the truth norm is zero.
double rel_l2(std::span<const double> truth, std::span<const double> pred);

/// Global scalar mean over every value of every sample.
double global_mean(std::span<const Field> set);

/// Coefficient of prognosis with the global mean of the truth set.
double cop(std::span<const Field> truth, std::span<const Field> pred);

struct MeanRelative {
  double percent = 0.0;
  std::size_t excluded = 0;  // samples with a degenerate denominator
};
MeanRelative mrl2e(std::span<const Field> truth, std::span<const Field> pred);
MeanRelative mrae(std::span<const Field> truth, std::span<const Field> pred);

struct PercentileCases {
  std::size_t best = 0, p25 = 0, p50 = 0, p75 = 0, worst = 0;
  std::array<std::size_t, 5> as_array() const { return {best, p25, p50, p75, worst}; }
};
/// Stable ascending sort; keeps the first floor(n * clip / 100) entries (at
/// least one) and picks rank round(q * (m - 1)) for q in {0, .25, .5, .75, 1}.
PercentileCases percentile_cases(std::span<const double> metric, double clip_percent);

struct ComponentReport {
  std::string name;
  std::vector<double> mae;
  std::vector<double> rel_l2;  // NaN where flagged
  double average_mae = 0.0;
  MeanRelative mrl2e;
  MeanRelative mrae;
  double cop = 0.0;
  PercentileCases cases;  // ranked by rel_l2 (degenerate samples last)
};

struct EvalReport {
  std::vector<ComponentReport> components;
  double clip_percent = 100.0;
  std::vector<std::size_t> ids;  // optional row labels, e.g. dataset indices
  std::size_t samples() const { return components.empty() ? 0 : components.front().mae.size(); }
};

ComponentReport evaluate_component(std::string name, std::span<const Field> truth, std::span<const Field> pred,
                                   double clip_percent);

/// One row per sample followed by a summary block.
std::string to_csv(const EvalReport& report);

}  // namespace odn::metrics
