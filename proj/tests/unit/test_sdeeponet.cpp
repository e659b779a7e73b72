#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "odn/core/error.hpp"
#include "odn/model/sdeeponet.hpp"
#include "odn/tensor/gradcheck.hpp"

using namespace odn;
using namespace odn::sdeeponet;

namespace {

Tensor random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(s));
  for (double& v : t.values()) v = uniform(rng, lo, hi);
  return t;
}

double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

// Step-by-step recurrence for one sequence, written from the gate equations.
std::vector<std::vector<double>> gru_sequence(const std::vector<std::vector<double>>& xs, const Parameter& w,
                                              const Parameter& u, const Parameter& b) {
  const std::size_t din = w.value.extent(0), dh = u.value.extent(0);
  std::vector<double> h(dh, 0.0);
  std::vector<std::vector<double>> out;
  for (const auto& x : xs) {
    std::vector<double> z(dh), r(dh), n(dh), next(dh);
    for (std::size_t j = 0; j < dh; ++j) {
      double az = b.value[j], ar = b.value[dh + j];
      for (std::size_t i = 0; i < din; ++i) {
        az += x[i] * w.value[i * 3 * dh + j];
        ar += x[i] * w.value[i * 3 * dh + dh + j];
      }
      for (std::size_t i = 0; i < dh; ++i) {
        az += h[i] * u.value[i * 3 * dh + j];
        ar += h[i] * u.value[i * 3 * dh + dh + j];
      }
      z[j] = sigmoid(az);
      r[j] = sigmoid(ar);
    }
    for (std::size_t j = 0; j < dh; ++j) {
      double an = b.value[2 * dh + j];
      for (std::size_t i = 0; i < din; ++i) an += x[i] * w.value[i * 3 * dh + 2 * dh + j];
      for (std::size_t i = 0; i < dh; ++i) an += r[i] * h[i] * u.value[i * 3 * dh + 2 * dh + j];
      n[j] = std::tanh(an);
      next[j] = (1.0 - z[j]) * h[j] + z[j] * n[j];
    }
    h = next;
    out.push_back(h);
  }
  return out;
}

std::vector<Sample> toy_samples(std::size_t count, std::size_t len, std::size_t nodes, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Sample> out;
  for (std::size_t s = 0; s < count; ++s) {
    Sample x;
    const double a = uniform(rng, 1.0, 3.0), d = uniform(rng, 0.0, 0.5);
    for (std::size_t t = 0; t < len; ++t) {
      const double u = static_cast<double>(t) / static_cast<double>(len - 1);
      x.flux.push_back(a * (1.0 - 0.5 * u));
      x.displacement.push_back(d * u);
    }
    for (std::size_t k = 0; k < nodes; ++k) {
      const double xi = static_cast<double>(k) / static_cast<double>(nodes - 1);
      x.temperature.push_back(1500.0 - 300.0 * a * (1.0 - xi) * (1.0 - xi));
      x.stress.push_back(-40.0 * d * std::cos(3.0 * xi) + 5.0 * a * xi);
    }
    out.push_back(std::move(x));
  }
  return out;
}

std::vector<double> line_coords(std::size_t nodes) {
  std::vector<double> c;
  for (std::size_t k = 0; k < nodes; ++k) {
    c.push_back(static_cast<double>(k) / static_cast<double>(nodes - 1));
    c.push_back(0.0);
  }
  return c;
}

std::vector<const Sample*> pointers(const std::vector<Sample>& v) {
  std::vector<const Sample*> p;
  for (const auto& s : v) p.push_back(&s);
  return p;
}

Config tiny_config() {
  Config c;
  c.sequence = 5;
  c.units_wide = 8;
  c.units_narrow = 4;
  c.trunk_width = 6;
  c.trunk_depth = 2;
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("fuse examples") {
  Tape t;
  Var b = t.constant(Tensor({1, 1}, {2.0}));
  Var tr = t.constant(Tensor({2, 1, 1}, {3.0, 4.0}));
  Var g = fuse(b, tr, t.constant(Tensor({1}, {0.5})));
  CHECK(g.shape() == Shape{1, 2, 1});
  CHECK(g.value()[0] == 6.5);
  CHECK(g.value()[1] == 8.5);

  Rng rng(1);
  Var z = fuse(t.constant(Tensor({3, 4})), t.constant(random_tensor({5, 4, 2}, rng)),
               t.constant(Tensor({2}, {0.25, -1.0})));
  for (std::size_t i = 0; i < z.value().size(); ++i) CHECK(z.value()[i] == (i % 2 == 0 ? 0.25 : -1.0));

  CHECK_THROWS_AS(fuse(t.constant(Tensor({2, 3})), t.constant(Tensor({4, 2, 1})), t.constant(Tensor({1}))),
                  DimensionError);
}

TEST_CASE("fuse equals the brute-force contraction on 100 random shapes") {
  Rng rng(77);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t b = 1 + rng() % 5, n = 1 + rng() % 5, hd = 1 + rng() % 5, c = 1 + rng() % 5;
    Tensor bt = random_tensor({b, hd}, rng), tt = random_tensor({n, hd, c}, rng), beta = random_tensor({c}, rng);
    Tape t;
    const Tensor g = fuse(t.constant(bt), t.constant(tt), t.constant(beta)).value();
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t q = 0; q < c; ++q) {
          double acc = beta[q];
          for (std::size_t h = 0; h < hd; ++h) acc += bt[i * hd + h] * tt[(k * hd + h) * c + q];
          worst = std::max(worst, std::abs(acc - g[(i * n + k) * c + q]));
        }
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("modified R2 loss identities") {
  Rng rng(5);
  for (std::size_t batch : {1u, 3u, 7u}) {
    const Tensor truth = random_tensor({batch, 602, 2}, rng, 0.0, 1.0);
    Tape t;
    CHECK(modified_r2_loss(t.constant(truth), truth, batch).value()[0] == 0.0);
    const auto v = truth.values();
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    const double l = modified_r2_loss(t.constant(Tensor(truth.shape(), mean)), truth, batch).value()[0];
    CHECK(std::abs(l - 1204.0) < 1e-9);
    const double r = modified_r2_loss(t.constant(random_tensor(truth.shape(), rng)), truth, batch).value()[0];
    CHECK(r >= 0.0);
  }
  // reordering samples inside the batch leaves the loss unchanged
  const Tensor truth = random_tensor({2, 3, 2}, rng), pred = random_tensor({2, 3, 2}, rng);
  Tensor ts({2, 3, 2}), ps({2, 3, 2});
  for (std::size_t i = 0; i < 6; ++i) {
    ts[i] = truth[6 + i];
    ts[6 + i] = truth[i];
    ps[i] = pred[6 + i];
    ps[6 + i] = pred[i];
  }
  Tape t;
  CHECK(modified_r2_loss(t.constant(pred), truth, 2).value()[0] ==
        doctest::Approx(modified_r2_loss(t.constant(ps), ts, 2).value()[0]).epsilon(1e-14));
  CHECK_THROWS_AS(modified_r2_loss(t.constant(pred), Tensor({2, 3, 2}, 0.4), 2), LossError);
}

TEST_CASE("branch forward") {
  Network net(tiny_config());
  Rng rng(9);
  const Tensor profiles = random_tensor({3, 5, 2}, rng);
  Tape t;
  Var b = net.branch(t, profiles);
  CHECK(b.shape() == Shape{3, 5});

  // independent recurrence for sample 1
  auto& ps = net.parameters();
  std::vector<std::vector<double>> xs;
  for (std::size_t k = 0; k < 5; ++k) xs.push_back({profiles[(5 + k) * 2], profiles[(5 + k) * 2 + 1]});
  auto s1 = gru_sequence(xs, ps.at("branch.gru1.w"), ps.at("branch.gru1.u"), ps.at("branch.gru1.b"));
  auto s2 = gru_sequence(s1, ps.at("branch.gru2.w"), ps.at("branch.gru2.u"), ps.at("branch.gru2.b"));
  std::vector<std::vector<double>> rep(5, s2.back());
  auto s3 = gru_sequence(rep, ps.at("branch.gru3.w"), ps.at("branch.gru3.u"), ps.at("branch.gru3.b"));
  auto s4 = gru_sequence(s3, ps.at("branch.gru4.w"), ps.at("branch.gru4.u"), ps.at("branch.gru4.b"));
  const auto& rw = ps.at("branch.readout.w").value;
  const double rb = ps.at("branch.readout.b").value[0];
  for (std::size_t k = 0; k < 5; ++k) {
    double y = rb;
    for (std::size_t j = 0; j < 8; ++j) y += s4[k][j] * rw[j];
    CHECK(b.value()[5 + k] == doctest::Approx(y).epsilon(1e-12));
  }

  for (auto& p : net.parameters()) p.value.fill(0.0);
  Tape t2;
  const Tensor zero = net.branch(t2, profiles).value();
  for (double v : zero.values()) CHECK(v == 0.0);
  CHECK_THROWS_AS(net.branch(t2, Tensor({3, 4, 2})), DimensionError);
}

TEST_CASE("trunk forward") {
  Network net(tiny_config());
  Rng rng(4);
  const Tensor coords = random_tensor({4, 2}, rng, 0.0, 1.0);
  Tensor swapped = coords;
  for (std::size_t j = 0; j < 2; ++j) std::swap(swapped[j], swapped[6 + j]);
  Tape t;
  const Tensor a = net.trunk(t, coords).value(), b = net.trunk(t, swapped).value();
  CHECK(a.shape() == Shape{4, 5, 2});
  const std::size_t row = 5 * 2;
  for (std::size_t i = 0; i < row; ++i) {
    CHECK(a[i] == b[3 * row + i]);
    CHECK(a[row + i] == b[row + i]);
  }
  CHECK(net.trunk(t, random_tensor({11, 2}, rng)).shape() == Shape{11, 5, 2});
  CHECK_THROWS_AS(net.trunk(t, Tensor({4, 3})), DimensionError);
  for (auto& p : net.parameters()) p.value.fill(0.0);
  for (double v : net.trunk(t, coords).value().values()) CHECK(v == 0.0);
}

TEST_CASE("end-to-end gradient through branch, trunk and fusion") {
  Network net(tiny_config());
  Rng rng(21);
  for (auto& p : net.parameters())
    if (p.name == "fuse.beta") p.value = random_tensor(p.value.shape(), rng, -0.2, 0.2);
  const Tensor profiles = random_tensor({2, 5, 2}, rng, 0.0, 1.0);
  const Tensor coords = random_tensor({3, 2}, rng, 0.0, 1.0);
  const Tensor truth = random_tensor({2, 3, 2}, rng, 0.0, 1.0);
  auto params = net.parameters().pointers();
  const double err = grad_check_parameters(
      [&](Tape& t) { return modified_r2_loss(net.forward(t, profiles, coords), truth, 2); }, params, 1e-5, 12, 4);
  CHECK(err < 1e-4);
}

TEST_CASE("training memorizes a toy set") {
  Config cfg;
  cfg.units_wide = 8;
  cfg.units_narrow = 4;
  cfg.trunk_width = 16;
  auto data = toy_samples(20, 101, 12, 8);
  Model m(cfg, line_coords(12));
  TrainConfig tc;
  tc.iterations = 2000;
  const auto r = m.train(pointers(data), tc);
  REQUIRE_FALSE(r.aborted);
  REQUIRE(r.history.size() == 2000);
  CHECK(r.history.back() < 0.1 * r.history.front());

  const auto p1 = m.predict(pointers(data)), p2 = m.predict(pointers(data));
  CHECK(p1 == p2);
  CHECK(p1.size() == 20);
  CHECK(p1[0].size() == 12 * 2);

  // checkpoint round trip reproduces predictions bit for bit
  const auto bytes = m.to_container().serialize();
  const Model back = Model::from_container(io::TensorContainer::parse(bytes));
  CHECK(back.predict(pointers(data)) == p1);
  CHECK(back.to_container().serialize() == bytes);
}

TEST_CASE("training is deterministic and flat at zero learning rate") {
  Config cfg = tiny_config();
  cfg.sequence = 101;
  auto data = toy_samples(6, 101, 5, 2);
  TrainConfig tc;
  tc.iterations = 15;
  tc.batch = 4;
  Model a(cfg, line_coords(5)), b(cfg, line_coords(5));
  CHECK(a.train(pointers(data), tc).history == b.train(pointers(data), tc).history);

  tc.learning_rate = 0.0;
  tc.batch = 32;
  Model z(cfg, line_coords(5));
  const auto h = z.train(pointers(data), tc).history;
  for (double v : h) CHECK(v == h.front());
}

TEST_CASE("scaler contract") {
  Rng rng(6);
  std::vector<std::vector<double>> cols(2);
  for (int i = 0; i < 50; ++i) {
    cols[0].push_back(uniform(rng, 20.0, 1550.0));
    cols[1].push_back(uniform(rng, -120.0, 30.0));
  }
  const auto s = model::MinMaxScaler::fit(cols);
  for (std::size_t c = 0; c < 2; ++c)
    for (double v : cols[c]) {
      CHECK(std::abs(s.inverse(s.transform(v, c), c) - v) < 1e-12);
      CHECK(s.transform(v, c) >= 0.0);
      CHECK(s.transform(v, c) <= 1.0);
    }
  CHECK_THROWS_AS(model::MinMaxScaler::fit({{1.0, 1.0}}), ParameterError);
  Model m(tiny_config(), line_coords(3));
  auto data = toy_samples(1, 5, 3, 1);
  CHECK_THROWS_AS(m.predict(pointers(data)), CheckpointError);
}
