#include <cmath>
#include <vector>

#include "doctest.h"
#include "odn/core/error.hpp"
#include "odn/metrics/metrics.hpp"

using namespace odn;
using namespace odn::metrics;

TEST_CASE("mae") {
  std::vector<double> a{1, 2}, b{2, 4};
  CHECK(mae(a, a) == 0.0);
  CHECK(mae(a, b) == doctest::Approx(1.5));
  std::vector<double> ar{2, 1}, br{4, 2};
  CHECK(mae(ar, br) == mae(a, b));
  std::vector<double> c{1};
  CHECK_THROWS_AS(mae(a, c), MetricError);
}

TEST_CASE("relative l2") {
  std::vector<double> t{3, 4}, zero{0, 0}, p{3, 3};
  CHECK(rel_l2(t, t) == 0.0);
  CHECK(rel_l2(t, zero) == doctest::Approx(100.0));
  CHECK(rel_l2(t, p) == doctest::Approx(20.0));
  std::vector<double> t7{21, 28}, p7{21, 21};
  CHECK(rel_l2(t7, p7) == doctest::Approx(20.0));
  CHECK_THROWS_AS(rel_l2(zero, t), MetricError);
}

TEST_CASE("cop and mean relative errors") {
  std::vector<Field> truth{{1, 2}, {3, 4}}, pred{{1, 3}, {3, 3}};
  CHECK(global_mean(truth) == 2.5);
  CHECK(cop(truth, pred) == 0.6);
  CHECK(cop(truth, truth) == 1.0);
  std::vector<Field> mean_pred{{2.5, 2.5}, {2.5, 2.5}};
  CHECK(std::abs(cop(truth, mean_pred)) < 1e-12);
  CHECK(cop(truth, std::vector<Field>{{9, -9}, {0, 100}}) <= 1.0);

  CHECK(mrl2e(truth, pred).percent == doctest::Approx((1 / std::sqrt(5.0) + 0.2) * 100 / 2).epsilon(1e-12));
  CHECK(mrl2e(truth, pred).percent == doctest::Approx(32.36).epsilon(1e-4));
  CHECK(mrl2e(truth, truth).percent == 0.0);
  CHECK(mrae(truth, truth).percent == 0.0);
  // |d| sums: 1 and 1; |t - mu| sums: 2 and 2
  CHECK(mrae(truth, pred).percent == doctest::Approx(50.0));

  std::vector<Field> one_t{{3, 4}}, one_p{{3, 3}};
  CHECK(mrl2e(one_t, one_p).percent == rel_l2(one_t[0], one_p[0]));

  std::vector<Field> flat{{1, 1}, {1, 1}};
  CHECK_THROWS_AS(cop(flat, flat), MetricError);
  CHECK_THROWS_AS(cop(one_t, one_p), MetricError);

  std::vector<Field> with_zero{{0, 0}, {3, 4}}, wz_pred{{1, 1}, {3, 3}};
  const auto r = mrl2e(with_zero, wz_pred);
  CHECK(r.excluded == 1);
  CHECK(r.percent == doctest::Approx(20.0));

  std::vector<Field> swapped_t{truth[1], truth[0]}, swapped_p{pred[1], pred[0]};
  CHECK(cop(swapped_t, swapped_p) == cop(truth, pred));
  CHECK(mrl2e(swapped_t, swapped_p).percent == doctest::Approx(mrl2e(truth, pred).percent).epsilon(1e-15));
}

TEST_CASE("percentile cases") {
  std::vector<double> m{5, 1, 3};
  auto c = percentile_cases(m, 100);
  CHECK(c.best == 1);
  CHECK(c.worst == 0);
  CHECK(c.p50 == 2);

  std::vector<double> ten{10, 9, 8, 7, 6, 5, 4, 3, 2, 1};
  auto c90 = percentile_cases(ten, 90);
  CHECK(ten[c90.worst] == 9);  // 9th smallest
  CHECK(ten[c90.best] == 1);

  std::vector<double> same(6, 2.0);
  auto ce = percentile_cases(same, 100);
  CHECK(ce.best == 0);
  CHECK(ce.worst == 5);
  CHECK_THROWS_AS(percentile_cases(std::vector<double>{}, 100), MetricError);
}

TEST_CASE("evaluation report") {
  std::vector<Field> truth{{1, 2}, {3, 4}, {0, 0}}, pred{{1, 3}, {3, 3}, {0, 1}};
  EvalReport rep;
  rep.components.push_back(evaluate_component("temperature", truth, truth, 100));
  rep.components.push_back(evaluate_component("stress", truth, pred, 100));
  CHECK(rep.components[0].cop == 1.0);
  CHECK(std::isnan(rep.components[1].rel_l2[2]));
  CHECK(rep.components[1].cases.worst == 2);
  const auto csv = to_csv(rep);
  CHECK(csv.find("temperature_mae,temperature_rel_l2_pct") != std::string::npos);
  CHECK(csv.find("\ntemperature,0,0,0,1,") != std::string::npos);
}
