#include "odn/tensor/layers.hpp"

#include <cmath>

#include "odn/core/error.hpp"

namespace odn {

Parameter& ParameterStore::add(std::string name, Tensor value) {
  if (contains(name)) throw ParameterError("duplicate parameter name '" + name + "'");
  return params_.emplace_back(std::move(name), std::move(value));
}

Parameter& ParameterStore::at(std::string_view name) {
  for (Parameter& p : params_) {
    if (p.name == name) return p;
  }
  throw CheckpointError("no parameter named '" + std::string(name) + "'");
}

const Parameter& ParameterStore::at(std::string_view name) const {
  return const_cast<ParameterStore*>(this)->at(name);
}

bool ParameterStore::contains(std::string_view name) const {
  for (const Parameter& p : params_) {
    if (p.name == name) return true;
  }
  return false;
}

std::vector<Parameter*> ParameterStore::pointers() {
  std::vector<Parameter*> out;
  for (Parameter& p : params_) out.push_back(&p);
  return out;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const Parameter& p : params_) n += p.value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (Parameter& p : params_) p.grad.fill(0.0);
}

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

Var activate(Var x, Activation a) {
  switch (a) {
    case Activation::relu: return ops::relu(x);
    case Activation::tanh: return ops::tanh(x);
    case Activation::none: break;
  }
  return x;
}

Var Dense::operator()(Tape& tape, Var x) const {
  return activate(ops::add_bias(ops::matmul(x, tape.parameter(*w)), tape.parameter(*b)), act);
}

Dense make_dense(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Activation act,
                 Rng& rng) {
  Dense d;
  d.w = &store.add(name + ".w", glorot_uniform({in, out}, in, out, rng));
  d.b = &store.add(name + ".b", Tensor({out}, 0.0));
  d.act = act;
  return d;
}

std::vector<Var> Gru::run(Tape& tape, std::span<const Var> xs) const {
  if (xs.empty()) throw DimensionError("GRU needs at least one time step");
  Var wv = tape.parameter(*w), uv = tape.parameter(*u), bv = tape.parameter(*b);
  Var h = tape.constant(Tensor({xs.front().shape()[0], hidden()}, 0.0));
  std::vector<Var> states;
  states.reserve(xs.size());
  for (const Var& x : xs) {
    h = ops::gru_cell(x, h, wv, uv, bv);
    states.push_back(h);
  }
  return states;
}

Gru make_gru(ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden, Rng& rng) {
  Gru g;
  g.w = &store.add(name + ".w", glorot_uniform({in, 3 * hidden}, in, 3 * hidden, rng));
  g.u = &store.add(name + ".u", glorot_uniform({hidden, 3 * hidden}, hidden, 3 * hidden, rng));
  g.b = &store.add(name + ".b", Tensor({3 * hidden}, 0.0));
  return g;
}

Var Conv::operator()(Tape& tape, Var x) const {
  return ops::conv2d(x, tape.parameter(*w), tape.parameter(*b), stride);
}

Conv make_conv(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, std::size_t k,
               std::size_t stride, Rng& rng) {
  Conv c;
  c.w = &store.add(name + ".w", glorot_uniform({out, in, k, k}, in * k * k, out * k * k, rng));
  c.b = &store.add(name + ".b", Tensor({out}, 0.0));
  c.stride = stride;
  return c;
}

}  // namespace odn
