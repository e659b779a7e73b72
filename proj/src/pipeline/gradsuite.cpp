#include "odn/pipeline/gradsuite.hpp"

#include <algorithm>
#include <functional>

#include "odn/core/rng.hpp"
#include "odn/model/resunet.hpp"
#include "odn/model/sdeeponet.hpp"
#include "odn/tensor/gradcheck.hpp"
#include "odn/tensor/ops.hpp"

namespace odn::pipeline {

namespace {

Tensor random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(s));
  for (double& v : t.values()) v = uniform(rng, lo, hi);
  return t;
}

// Fixed random weights make every coordinate's gradient O(1).
Var weighted_sum(Tape& tape, Var y, std::uint64_t seed) {
  Rng rng(seed);
  return ops::sum(ops::mul(y, tape.constant(random_tensor(y.shape(), rng))));
}

std::uint64_t name_seed(const std::string& name) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : name) h = (h ^ ch) * 1099511628211ULL;
  return derive_seed(42, h);
}

}  // namespace

std::vector<GradResult> op_gradient_checks(std::size_t points) {
  using Fn = std::function<Var(Tape&, Var)>;
  struct Case {
    const char* name;
    Shape shape;
    Fn f;
    double lo = -1.0, hi = 1.0;
  };
  Rng wr(100);
  const Tensor m34 = random_tensor({3, 4}, wr), m23 = random_tensor({2, 3}, wr), b4 = random_tensor({4}, wr);
  const Tensor bma = random_tensor({2, 5, 3}, wr);
  const Tensor bm = random_tensor({2, 3, 4}, wr), bmt = random_tensor({2, 5, 4}, wr);
  const Tensor gw = random_tensor({3, 6}, wr), gu = random_tensor({2, 6}, wr), gb = random_tensor({6}, wr),
               gx = random_tensor({2, 3}, wr), gh = random_tensor({2, 2}, wr);
  const Tensor cw = random_tensor({2, 2, 3, 3}, wr), cb = random_tensor({2}, wr), cx = random_tensor({1, 2, 5, 4}, wr);
  const Tensor other = random_tensor({3, 4}, wr);

  std::vector<Case> cases = {
      {"matmul.a", {2, 3}, [&](Tape& t, Var x) { return weighted_sum(t, ops::matmul(x, t.constant(m34)), 1); }},
      {"matmul.b", {3, 4}, [&](Tape& t, Var x) { return weighted_sum(t, ops::matmul(t.constant(m23), x), 2); }},
      {"batched_matmul.a", {2, 5, 3},
       [&](Tape& t, Var x) { return weighted_sum(t, ops::batched_matmul(x, t.constant(bm)), 3); }},
      {"batched_matmul.b", {2, 3, 4},
       [&](Tape& t, Var x) {
         return weighted_sum(t, ops::batched_matmul(t.constant(bma), x), 4);
       }},
      {"batched_matmul.bt", {2, 5, 4},
       [&](Tape& t, Var x) {
         return weighted_sum(t, ops::batched_matmul(t.constant(bmt), x, true), 5);
       }},
      {"add", {3, 4}, [&](Tape& t, Var x) { return weighted_sum(t, ops::add(x, t.constant(other)), 6); }},
      {"sub", {3, 4}, [&](Tape& t, Var x) { return weighted_sum(t, ops::sub(t.constant(other), x), 7); }},
      {"mul", {3, 4}, [&](Tape& t, Var x) { return weighted_sum(t, ops::mul(x, x), 8); }},
      {"scale", {3, 4}, [&](Tape& t, Var x) { return weighted_sum(t, ops::scale(x, -2.5), 9); }},
      {"add_bias.x", {3, 4}, [&](Tape& t, Var x) { return weighted_sum(t, ops::add_bias(x, t.constant(b4)), 10); }},
      {"add_bias.b", {4}, [&](Tape& t, Var x) { return weighted_sum(t, ops::add_bias(t.constant(other), x), 11); }},
      {"relu", {3, 4}, [&](Tape& t, Var x) { return weighted_sum(t, ops::relu(x), 12); }},
      {"tanh", {3, 4}, [&](Tape& t, Var x) { return weighted_sum(t, ops::tanh(x), 13); }},
      {"sigmoid", {3, 4}, [&](Tape& t, Var x) { return weighted_sum(t, ops::sigmoid(x), 14); }},
      {"exp", {3, 4}, [&](Tape& t, Var x) { return weighted_sum(t, ops::exp(x), 15); }},
      {"log", {3, 4}, [&](Tape& t, Var x) { return weighted_sum(t, ops::log(x), 16); }, 0.5, 2.0},
      {"abs", {3, 4}, [&](Tape& t, Var x) { return weighted_sum(t, ops::abs(x), 17); }},
      {"square", {3, 4}, [&](Tape& t, Var x) { return weighted_sum(t, ops::square(x), 18); }},
      {"sum", {3, 4}, [&](Tape&, Var x) { return ops::sum(x); }},
      {"mean", {3, 4}, [&](Tape&, Var x) { return ops::mean(x); }},
      {"reshape", {3, 4}, [&](Tape& t, Var x) { return weighted_sum(t, ops::reshape(x, {2, 6}), 19); }},
      {"permute", {2, 3, 4}, [&](Tape& t, Var x) { return weighted_sum(t, ops::permute(x, {2, 0, 1}), 20); }},
      {"concat", {2, 3},
       [&](Tape& t, Var x) {
         std::vector<Var> parts{x, t.constant(Tensor({2, 2}, 0.5)), x};
         return weighted_sum(t, ops::concat(parts, 1), 21);
       }},
      {"gru.x", {2, 3},
       [&](Tape& t, Var x) {
         return weighted_sum(t, ops::gru_cell(x, t.constant(gh), t.constant(gw), t.constant(gu), t.constant(gb)), 22);
       }},
      {"gru.h", {2, 2},
       [&](Tape& t, Var x) {
         return weighted_sum(t, ops::gru_cell(t.constant(gx), x, t.constant(gw), t.constant(gu), t.constant(gb)), 23);
       }},
      {"gru.w", {3, 6},
       [&](Tape& t, Var x) {
         return weighted_sum(t, ops::gru_cell(t.constant(gx), t.constant(gh), x, t.constant(gu), t.constant(gb)), 24);
       }},
      {"gru.u", {2, 6},
       [&](Tape& t, Var x) {
         return weighted_sum(t, ops::gru_cell(t.constant(gx), t.constant(gh), t.constant(gw), x, t.constant(gb)), 25);
       }},
      {"gru.b", {6},
       [&](Tape& t, Var x) {
         return weighted_sum(t, ops::gru_cell(t.constant(gx), t.constant(gh), t.constant(gw), t.constant(gu), x), 26);
       }},
      {"conv.x", {1, 2, 5, 4},
       [&](Tape& t, Var x) { return weighted_sum(t, ops::conv2d(x, t.constant(cw), t.constant(cb)), 27); }},
      {"conv.x.s2", {1, 2, 5, 4},
       [&](Tape& t, Var x) { return weighted_sum(t, ops::conv2d(x, t.constant(cw), t.constant(cb), 2), 28); }},
      {"conv.w", {2, 2, 3, 3},
       [&](Tape& t, Var x) { return weighted_sum(t, ops::conv2d(t.constant(cx), x, t.constant(cb), 2), 29); }},
      {"conv.w1x1", {3, 2, 1, 1},
       [&](Tape& t, Var x) { return weighted_sum(t, ops::conv2d(t.constant(cx), x, t.constant(Tensor({3}))), 30); }},
      {"conv.b", {2},
       [&](Tape& t, Var x) { return weighted_sum(t, ops::conv2d(t.constant(cx), t.constant(cw), x), 31); }},
      {"upsample", {1, 2, 2, 3}, [&](Tape& t, Var x) { return weighted_sum(t, ops::upsample_nearest(x), 32); }},
  };
  std::vector<GradResult> out;
  for (const Case& c : cases) {
    Rng rng(name_seed(c.name));
    double worst = 0.0;
    for (std::size_t p = 0; p < points; ++p)
      worst = std::max(worst, grad_check(c.f, random_tensor(c.shape, rng, c.lo, c.hi)));
    out.push_back({c.name, worst});
  }
  return out;
}

std::vector<GradResult> model_gradient_checks() {
  std::vector<GradResult> out;
  Rng rng(2718);

  {
    const Tensor tr = random_tensor({3, 4, 2}, rng), beta = random_tensor({2}, rng), bt = random_tensor({2, 4}, rng);
    out.push_back({"sdeeponet.fuse.branch", grad_check([&](Tape& t, Var x) {
                     return weighted_sum(t, sdeeponet::fuse(x, t.constant(tr), t.constant(beta)), 41);
                   }, random_tensor({2, 4}, rng))});
    out.push_back({"sdeeponet.fuse.trunk", grad_check([&](Tape& t, Var x) {
                     return weighted_sum(t, sdeeponet::fuse(t.constant(bt), x, t.constant(beta)), 42);
                   }, random_tensor({3, 4, 2}, rng))});
    const Tensor truth = random_tensor({2, 3, 2}, rng, 0.0, 1.0);
    out.push_back({"modified_r2_loss", grad_check([&](Tape&, Var x) { return sdeeponet::modified_r2_loss(x, truth, 2); },
                                                  random_tensor({2, 3, 2}, rng, 0.0, 1.0))});
  }
  {
    const Tensor tr = random_tensor({2, 5, 3}, rng), beta = random_tensor({2}, rng), bt = random_tensor({2, 2, 3}, rng);
    out.push_back({"resunet.fuse.branch", grad_check([&](Tape& t, Var x) {
                     return weighted_sum(t, resunet::fuse(x, t.constant(tr), t.constant(beta)), 43);
                   }, random_tensor({2, 2, 3}, rng))});
    out.push_back({"resunet.fuse.trunk", grad_check([&](Tape& t, Var x) {
                     return weighted_sum(t, resunet::fuse(t.constant(bt), x, t.constant(beta)), 44);
                   }, random_tensor({2, 5, 3}, rng))});
    const Tensor truth = random_tensor({1, 4, 2}, rng, 0.0, 1.0);
    const Tensor mask({1, 4}, {1.0, 0.0, 1.0, 1.0});
    out.push_back({"masked_mse_loss", grad_check([&](Tape&, Var x) { return resunet::masked_mse_loss(x, truth, mask); },
                                                 random_tensor({1, 4, 2}, rng))});
  }
  {
    sdeeponet::Config cfg;
    cfg.sequence = 5;
    cfg.units_wide = 8;
    cfg.units_narrow = 4;
    cfg.trunk_width = 6;
    cfg.trunk_depth = 2;
    cfg.seed = 3;
    sdeeponet::Network net(cfg);
    for (auto& p : net.parameters())
      if (p.name == "fuse.beta") p.value = random_tensor(p.value.shape(), rng, -0.2, 0.2);
    const Tensor profiles = random_tensor({2, 5, 2}, rng, 0.0, 1.0);
    const Tensor coords = random_tensor({3, 2}, rng, 0.0, 1.0);
    const Tensor truth = random_tensor({2, 3, 2}, rng, 0.0, 1.0);
    auto params = net.parameters().pointers();
    out.push_back({"sdeeponet.tiny", grad_check_parameters([&](Tape& t) {
                     return sdeeponet::modified_r2_loss(net.forward(t, profiles, coords), truth, 2);
                   }, params, 1e-5, 12, 4)});
  }
  {
    resunet::Config cfg;
    cfg.size = 8;
    cfg.channels = {2, 4};
    cfg.hidden = 3;
    cfg.branch_width = 5;
    cfg.seed = 12;
    resunet::Network net(cfg);
    for (auto& p : net.parameters())
      if (p.name == "fuse.beta") p.value = random_tensor(p.value.shape(), rng, -0.2, 0.2);
    Tensor masks({2, 1, 8, 8});
    for (double& v : masks.values()) v = uniform(rng, 0.0, 1.0) < 0.7 ? 1.0 : 0.0;
    const Tensor vel({2, 1}, {0.3, 0.8});
    const Tensor truth = random_tensor({2, 64, 2}, rng, 0.0, 1.0);
    const Tensor material = masks.reshaped({2, 64});
    auto params = net.parameters().pointers();
    out.push_back({"resunet.tiny", grad_check_parameters([&](Tape& t) {
                     return resunet::masked_mse_loss(net.forward(t, masks, vel), truth, material);
                   }, params, 1e-5, 10, 6)});
  }
  return out;
}

}  // namespace odn::pipeline
