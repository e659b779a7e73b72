#include "odn/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "odn/core/error.hpp"

namespace odn::metrics {

namespace {

void check_pair(std::span<const double> truth, std::span<const double> pred) {
  if (truth.size() != pred.size()) {
    throw MetricError("field length mismatch: " + std::to_string(truth.size()) + " vs " + std::to_string(pred.size()));
  }
  if (truth.empty()) throw MetricError("empty field");
}

void check_sets(std::span<const Field> truth, std::span<const Field> pred) {
  if (truth.size() != pred.size()) throw MetricError("sample count mismatch");
  if (truth.empty()) throw MetricError("empty sample set");
  for (std::size_t i = 0; i < truth.size(); ++i) check_pair(truth[i], pred[i]);
}

}  // namespace

double mae(std::span<const double> truth, std::span<const double> pred) {
  check_pair(truth, pred);
  double s = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) s += std::abs(truth[i] - pred[i]);
  return s / static_cast<double>(truth.size());
}

double rel_l2(std::span<const double> truth, std::span<const double> pred) {
  check_pair(truth, pred);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    num += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    den += truth[i] * truth[i];
  }
  if (!(den > 0.0)) throw MetricError("relative L2 error undefined for a zero-norm truth field");
  return std::sqrt(num / den) * 100.0;
}

double global_mean(std::span<const Field> set) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& f : set) {
    s += std::accumulate(f.begin(), f.end(), 0.0);
    n += f.size();
  }
  if (n == 0) throw MetricError("mean of an empty set");
  return s / static_cast<double>(n);
}

double cop(std::span<const Field> truth, std::span<const Field> pred) {
  check_sets(truth, pred);
  if (truth.size() < 2) throw MetricError("CoP needs at least two samples");
  const double mu = global_mean(truth);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    for (std::size_t j = 0; j < truth[i].size(); ++j) {
      const double d = truth[i][j] - pred[i][j];
      const double v = truth[i][j] - mu;
      num += d * d;
      den += v * v;
    }
  if (!(den > 0.0)) throw MetricError("CoP undefined: truth set has zero total variation");
  return 1.0 - num / den;
}

MeanRelative mrl2e(std::span<const Field> truth, std::span<const Field> pred) {
  check_sets(truth, pred);
  MeanRelative out;
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    try {
      sum += rel_l2(truth[i], pred[i]);
      ++used;
    } catch (const MetricError&) {
      ++out.excluded;
    }
  }
  if (used == 0) throw MetricError("every sample has a degenerate relative L2 denominator");
  out.percent = sum / static_cast<double>(used);
  return out;
}

MeanRelative mrae(std::span<const Field> truth, std::span<const Field> pred) {
  check_sets(truth, pred);
  const double mu = global_mean(truth);
  MeanRelative out;
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < truth[i].size(); ++j) {
      num += std::abs(truth[i][j] - pred[i][j]);
      den += std::abs(truth[i][j] - mu);
    }
    if (!(den > 0.0)) {
      ++out.excluded;
      continue;
    }
    sum += num / den * 100.0;
    ++used;
  }
  if (used == 0) throw MetricError("every sample has a degenerate MRAE denominator");
  out.percent = sum / static_cast<double>(used);
  return out;
}

PercentileCases percentile_cases(std::span<const double> metric, double clip_percent) {
  if (metric.empty()) throw MetricError("percentile selection needs at least one sample");
  if (!(clip_percent > 0.0 && clip_percent <= 100.0)) throw MetricError("clip percent must lie in (0, 100]");
  std::vector<std::size_t> order(metric.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // NaN (flagged) samples sort last
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const bool na = std::isnan(metric[a]), nb = std::isnan(metric[b]);
    if (na != nb) return nb;
    return !na && metric[a] < metric[b];
  });
  const auto m = std::max<std::size_t>(1, static_cast<std::size_t>(
                                              std::floor(static_cast<double>(metric.size()) * clip_percent / 100.0 + 1e-9)));
  auto pick = [&](double q) { return order[static_cast<std::size_t>(std::lround(q * static_cast<double>(m - 1)))]; };
  return {pick(0.0), pick(0.25), pick(0.5), pick(0.75), pick(1.0)};
}

ComponentReport evaluate_component(std::string name, std::span<const Field> truth, std::span<const Field> pred,
                                   double clip_percent) {
  check_sets(truth, pred);
  ComponentReport r;
  r.name = std::move(name);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    r.mae.push_back(mae(truth[i], pred[i]));
    try {
      r.rel_l2.push_back(rel_l2(truth[i], pred[i]));
    } catch (const MetricError&) {
      r.rel_l2.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }
  r.average_mae = std::accumulate(r.mae.begin(), r.mae.end(), 0.0) / static_cast<double>(r.mae.size());
  r.mrl2e = mrl2e(truth, pred);
  r.mrae = mrae(truth, pred);
  r.cop = truth.size() >= 2 ? cop(truth, pred) : std::numeric_limits<double>::quiet_NaN();
  r.cases = percentile_cases(r.rel_l2, clip_percent);
  return r;
}

std::string to_csv(const EvalReport& report) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "sample";
  for (const auto& c : report.components) os << ',' << c.name << "_mae," << c.name << "_rel_l2_pct";
  os << '\n';
  for (std::size_t i = 0; i < report.samples(); ++i) {
    os << (i < report.ids.size() ? report.ids[i] : i);
    for (const auto& c : report.components) os << ',' << c.mae[i] << ',' << c.rel_l2[i];
    os << '\n';
  }
  os << "\ncomponent,average_mae,mrl2e_pct,mrae_pct,cop,excluded,best,p25,p50,p75,worst,clip_pct\n";
  for (const auto& c : report.components) {
    os << c.name << ',' << c.average_mae << ',' << c.mrl2e.percent << ',' << c.mrae.percent << ',' << c.cop << ','
       << c.mrl2e.excluded;
    for (auto idx : c.cases.as_array()) os << ',' << (idx < report.ids.size() ? report.ids[idx] : idx);
    os << ',' << report.clip_percent << '\n';
  }
  return os.str();
}

}  // namespace odn::metrics
