#include <cmath>
#include <vector>

#include "doctest.h"
#include "odn/core/error.hpp"
#include "odn/core/rng.hpp"
#include "odn/tensor/gradcheck.hpp"
#include "odn/tensor/layers.hpp"
#include "odn/tensor/ops.hpp"
#include "odn/tensor/optim.hpp"
#include "odn/pipeline/gradsuite.hpp"

using namespace odn;

namespace {

Tensor random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(s));
  for (double& v : t.values()) v = uniform(rng, lo, hi);
  return t;
}

// Fixed random weights turn sum-type reductions into O(1) gradients for every coordinate.
Var weighted_sum(Tape& tape, Var y, std::uint64_t seed) {
  Rng rng(seed);
  return ops::sum(ops::mul(y, tape.constant(random_tensor(y.shape(), rng))));
}

double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

// Scalar-by-scalar GRU step, written against the gate equations only.
std::vector<double> gru_reference(const std::vector<double>& x, const std::vector<double>& h, const Tensor& w,
                                  const Tensor& u, const Tensor& b, std::size_t din, std::size_t dh) {
  std::vector<double> out(dh);
  for (std::size_t j = 0; j < dh; ++j) {
    double az = b[j], ar = b[dh + j];
    for (std::size_t i = 0; i < din; ++i) {
      az += x[i] * w[i * 3 * dh + j];
      ar += x[i] * w[i * 3 * dh + dh + j];
    }
    for (std::size_t i = 0; i < dh; ++i) {
      az += h[i] * u[i * 3 * dh + j];
      ar += h[i] * u[i * 3 * dh + dh + j];
    }
    (void)ar;
    const double z = sigmoid(az);
    double an = b[2 * dh + j];
    for (std::size_t i = 0; i < din; ++i) an += x[i] * w[i * 3 * dh + 2 * dh + j];
    for (std::size_t i = 0; i < dh; ++i) {
      double ari = b[dh + i];
      for (std::size_t q = 0; q < din; ++q) ari += x[q] * w[q * 3 * dh + dh + i];
      for (std::size_t q = 0; q < dh; ++q) ari += h[q] * u[q * 3 * dh + dh + i];
      an += sigmoid(ari) * h[i] * u[i * 3 * dh + 2 * dh + j];
    }
    out[j] = (1.0 - z) * h[j] + z * std::tanh(an);
  }
  return out;
}

// Direct nested-loop cross-correlation with zero padding k/2.
Tensor conv_reference(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride) {
  const std::size_t B = x.extent(0), C = x.extent(1), H = x.extent(2), W = x.extent(3);
  const std::size_t O = w.extent(0), K = w.extent(2);
  const long p = static_cast<long>(K / 2);
  const std::size_t Ho = (H + 2 * (K / 2) - K) / stride + 1, Wo = (W + 2 * (K / 2) - K) / stride + 1;
  Tensor out({B, O, Ho, Wo});
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t y = 0; y < Ho; ++y)
        for (std::size_t xo = 0; xo < Wo; ++xo) {
          double acc = b[o];
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t ky = 0; ky < K; ++ky)
              for (std::size_t kx = 0; kx < K; ++kx) {
                const long iy = static_cast<long>(y * stride + ky) - p;
                const long ix = static_cast<long>(xo * stride + kx) - p;
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W)) continue;
                acc += x[((n * C + c) * H + iy) * W + ix] * w[((o * C + c) * K + ky) * K + kx];
              }
          out[((n * O + o) * Ho + y) * Wo + xo] = acc;
        }
  return out;
}

}  // namespace

TEST_CASE("matmul identity and hand product") {
  Tape tape;
  Var i2 = tape.constant(Tensor({2, 2}, {1, 0, 0, 1}));
  Var a = tape.constant(Tensor({2, 2}, {1, 2, 3, 4}));
  CHECK(ops::matmul(i2, a).value() == a.value());
  Var b = tape.constant(Tensor({2, 1}, {5, 6}));
  CHECK(ops::matmul(a, b).value() == Tensor({2, 1}, {17, 39}));
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape tape;
  Var a = tape.constant(Tensor({2, 3}));
  Var b = tape.constant(Tensor({2, 3}));
  try {
    ops::matmul(a, b);
    FAIL("expected a dimension error");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("unary activations") {
  Tape tape;
  CHECK(ops::relu(tape.constant(Tensor({3}, {-1, 0, 2}))).value() == Tensor({3}, {0, 0, 2}));
  CHECK(ops::tanh(tape.constant(Tensor({1}, {0}))).value()[0] == 0.0);
  CHECK(ops::sigmoid(tape.constant(Tensor({1}, {0}))).value()[0] == 0.5);
  CHECK_THROWS_AS(ops::log(tape.constant(Tensor({2}, {1.0, 0.0}))), DomainError);
  CHECK_THROWS_AS(ops::log(tape.constant(Tensor({1}, {-3.0}))), DomainError);
}

TEST_CASE("non-finite forward values are rejected") {
  Tape tape;
  CHECK_THROWS_AS(ops::exp(tape.constant(Tensor({1}, {1000.0}))), DomainError);
}

TEST_CASE("gru_cell zero network and boundedness") {
  Tape tape;
  Var x = tape.constant(Tensor({2, 3}, {0.5, -1, 2, 3, 0.1, -0.2}));
  Var h = tape.constant(Tensor({2, 4}, 0.0));
  Var w = tape.constant(Tensor({3, 12}, 0.0));
  Var u = tape.constant(Tensor({4, 12}, 0.0));
  Var b = tape.constant(Tensor({12}, 0.0));
  for (double v : ops::gru_cell(x, h, w, u, b).value().values()) CHECK(v == 0.0);

  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Var hp = tape.constant(random_tensor({2, 4}, rng));
    Var wr = tape.constant(random_tensor({3, 12}, rng, -3, 3));
    Var ur = tape.constant(random_tensor({4, 12}, rng, -3, 3));
    Var br = tape.constant(random_tensor({12}, rng, -3, 3));
    for (double v : ops::gru_cell(x, hp, wr, ur, br).value().values()) {
      CHECK(v >= -1.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("gru_cell matches the scalar reference") {
  Rng rng(2024);
  const std::size_t din = 2, dh = 3;
  Tensor x = random_tensor({1, din}, rng), h = random_tensor({1, dh}, rng);
  Tensor w = random_tensor({din, 3 * dh}, rng), u = random_tensor({dh, 3 * dh}, rng);
  Tensor b = random_tensor({3 * dh}, rng);
  Tape tape;
  Var out = ops::gru_cell(tape.constant(x), tape.constant(h), tape.constant(w), tape.constant(u), tape.constant(b));
  auto ref = gru_reference({x[0], x[1]}, {h[0], h[1], h[2]}, w, u, b, din, dh);
  for (std::size_t j = 0; j < dh; ++j) CHECK(out.value()[j] == doctest::Approx(ref[j]).epsilon(1e-14));
}

TEST_CASE("gru_cell shape mismatch") {
  Tape tape;
  CHECK_THROWS_AS(ops::gru_cell(tape.constant(Tensor({1, 2})), tape.constant(Tensor({1, 3})),
                                tape.constant(Tensor({2, 8})), tape.constant(Tensor({3, 9})),
                                tape.constant(Tensor({9}))),
                  DimensionError);
}

TEST_CASE("conv2d hand cases") {
  Tape tape;
  Var ones = tape.constant(Tensor({1, 1, 3, 3}, 1.0));
  Var k = tape.constant(Tensor({1, 1, 3, 3}, 1.0));
  Var zero_bias = tape.constant(Tensor({1}, 0.0));
  const Tensor& y = ops::conv2d(ones, k, zero_bias).value();
  CHECK(y[4] == 9.0);
  CHECK(y[0] == 4.0);
  CHECK(y[2] == 4.0);
  CHECK(y[6] == 4.0);
  CHECK(y[8] == 4.0);
  CHECK(y[1] == 6.0);

  Rng rng(5);
  Tensor delta({2, 2, 3, 3}, 0.0);
  delta[((0 * 2 + 0) * 3 + 1) * 3 + 1] = 1.0;
  delta[((1 * 2 + 1) * 3 + 1) * 3 + 1] = 1.0;
  Tensor x = random_tensor({3, 2, 5, 7}, rng);
  CHECK(ops::conv2d(tape.constant(x), tape.constant(delta), tape.constant(Tensor({2}, 0.0))).value() == x);

  Var x4 = tape.constant(Tensor({1, 1, 4, 4}, 1.0));
  CHECK(ops::conv2d(x4, k, zero_bias, 2).shape() == Shape{1, 1, 2, 2});
  CHECK_THROWS_AS(ops::conv2d(tape.constant(Tensor({1, 2, 4, 4})), k, zero_bias), DimensionError);
}

TEST_CASE("conv2d matches the nested-loop reference") {
  Rng rng(77);
  for (std::size_t stride : {1u, 2u}) {
    for (std::size_t k : {1u, 3u}) {
      Tensor x = random_tensor({2, 3, 6, 5}, rng), w = random_tensor({4, 3, k, k}, rng), b = random_tensor({4}, rng);
      Tape tape;
      const Tensor& y = ops::conv2d(tape.constant(x), tape.constant(w), tape.constant(b), stride).value();
      Tensor ref = conv_reference(x, w, b, stride);
      REQUIRE(y.shape() == ref.shape());
      for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-13));
    }
  }
}

TEST_CASE("upsample_nearest forward and backward") {
  Tape tape;
  CHECK(ops::upsample_nearest(tape.constant(Tensor({1, 1, 1, 1}, 1.0))).value() == Tensor({1, 1, 2, 2}, 1.0));
  Var x = tape.variable(Tensor({1, 1, 2, 2}, {1, 2, 3, 4}));
  Var y = ops::upsample_nearest(x);
  CHECK(y.value() == Tensor({1, 1, 4, 4}, {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4}));
  tape.backward(ops::sum(y));
  const Tensor gx = tape.gradient(x);
  for (double g : gx.values()) CHECK(g == 4.0);
}

TEST_CASE("adam step algebra") {
  Parameter p("p", Tensor({3}, {1.0, -2.0, 0.5}));
  Adam zero({&p}, {});
  for (int i = 0; i < 5; ++i) zero.step();
  CHECK(p.value == Tensor({3}, {1.0, -2.0, 0.5}));

  Parameter q("q", Tensor({4}, {0.3, 0.3, -0.1, 2.0}));
  const Tensor start = q.value;
  Adam adam({&q}, {.learning_rate = 1e-3});
  const double g[4] = {0.7, -3.0, 1e-3, 42.0};
  for (int i = 0; i < 4; ++i) q.grad[i] = g[i];
  adam.step();
  for (int i = 0; i < 4; ++i) {
    const double delta = q.value[i] - start[i];
    CHECK(std::fabs(std::fabs(delta) - 1e-3) < 1e-6);
    CHECK((delta < 0) == (g[i] > 0));
  }
  adam.step();
  for (int i = 0; i < 4; ++i) {
    CHECK(adam.second_moment(0)[i] == doctest::Approx((1.0 - 0.999 * 0.999) * g[i] * g[i]).epsilon(1e-12));
  }
  CHECK(adam.steps() == 2);
}

TEST_CASE("adam aborts on a non-finite gradient naming the parameter") {
  Parameter p("branch.gru0.w", Tensor({2}, 1.0));
  Adam adam({&p});
  p.grad[1] = std::nan("");
  try {
    adam.step();
    FAIL("expected abort");
  } catch (const TrainingAbort& e) {
    CHECK(std::string(e.what()).find("branch.gru0.w") != std::string::npos);
  }
  CHECK(p.value == Tensor({2}, 1.0));
}

TEST_CASE("backward replays every op once") {
  Tape tape;
  Var x = tape.variable(Tensor({2, 2}, {1, 2, 3, 4}));
  Var c = tape.constant(Tensor({2, 2}, 2.0));
  Var y = ops::sum(ops::tanh(ops::mul(ops::matmul(x, c), x)));
  Var unrelated = ops::square(x);
  (void)unrelated;
  CHECK(tape.backward(y) == tape.op_count());
}

TEST_CASE("forward evaluation is bit-deterministic") {
  Rng rng(9);
  Tensor x = random_tensor({2, 3, 8, 8}, rng), w = random_tensor({4, 3, 3, 3}, rng), b = random_tensor({4}, rng);
  Tape t1, t2;
  auto run = [&](Tape& t) {
    return ops::relu(ops::conv2d(t.constant(x), t.constant(w), t.constant(b), 2)).value();
  };
  CHECK(run(t1) == run(t2));
}

TEST_CASE("grad_check reference functions") {
  CHECK(grad_check([](Tape&, Var x) { return ops::sum(ops::square(x)); }, Tensor({3}, {1, 2, 3})) < 1e-7);
  Rng rng(3);
  CHECK(grad_check([](Tape&, Var x) { return ops::sum(ops::tanh(x)); }, random_tensor({6}, rng)) < 1e-5);
  Tensor w = random_tensor({2, 9}, rng), u = random_tensor({3, 9}, rng), b = random_tensor({9}, rng),
         h = random_tensor({1, 3}, rng);
  auto through_gru = [&](Tape& t, Var x) {
    return weighted_sum(t, ops::gru_cell(x, t.constant(h), t.constant(w), t.constant(u), t.constant(b)), 1);
  };
  CHECK(grad_check(through_gru, random_tensor({1, 2}, rng)) < 1e-4);
  CHECK_THROWS_AS(grad_check([](Tape&, Var x) { return ops::sum(ops::log(x)); }, Tensor({1}, {1e-9})), DomainError);
}

TEST_CASE("every differentiable op passes grad_check at 10 seeded points") {
  for (const auto& r : pipeline::op_gradient_checks(10)) {
    INFO(r.name);
    CHECK(r.error < pipeline::kGradTolerance);
  }
}

TEST_CASE("adam with zero gradients is the identity for any state") {
  Parameter p("p", Tensor({3}, {0.1, 0.2, 0.3}));
  Adam adam({&p});
  p.grad = Tensor({3}, {1.0, -1.0, 2.0});
  adam.step();
  adam.step();
  const Tensor after = p.value;
  p.grad.fill(0.0);
  for (int i = 0; i < 3; ++i) adam.step();
  CHECK(p.value == after);
  CHECK(adam.steps() == 5);
}
