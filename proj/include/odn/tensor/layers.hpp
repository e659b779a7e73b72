#pragma once

#include <cstddef>
#include <deque>
#include <string>
#include <string_view>
#include <vector>

#include "odn/core/rng.hpp"
#include "odn/tensor/ops.hpp"

namespace odn {

/// Owns named parameters at stable addresses, in creation order.
class ParameterStore {
 public:
  Parameter& add(std::string name, Tensor value);
  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::vector<Parameter*> pointers();
  std::size_t size() const noexcept { return params_.size(); }
  std::size_t scalar_count() const;
  void zero_grad();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::deque<Parameter> params_;
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

enum class Activation { none, relu, tanh };
Var activate(Var x, Activation a);

/// y = act(x W + b), x: [n x in].
struct Dense {
  Parameter* w = nullptr;
  Parameter* b = nullptr;
  Activation act = Activation::none;

  Var operator()(Tape& tape, Var x) const;
  std::size_t inputs() const { return w->value.extent(0); }
  std::size_t outputs() const { return w->value.extent(1); }
};
Dense make_dense(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Activation act,
                 Rng& rng);

/// Gated recurrent layer; weights packed [update | reset | candidate].
struct Gru {
  Parameter* w = nullptr;  // [in x 3h]
  Parameter* u = nullptr;  // [h x 3h]
  Parameter* b = nullptr;  // [3h]

  std::size_t inputs() const { return w->value.extent(0); }
  std::size_t hidden() const { return u->value.extent(0); }
  /// Runs the recurrence from a zero state; returns the hidden state after each step.
  std::vector<Var> run(Tape& tape, std::span<const Var> xs) const;
};
Gru make_gru(ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden, Rng& rng);

/// k x k convolution, zero padding k/2.
struct Conv {
  Parameter* w = nullptr;  // [out x in x k x k]
  Parameter* b = nullptr;  // [out]
  std::size_t stride = 1;

  Var operator()(Tape& tape, Var x) const;
};
Conv make_conv(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, std::size_t k,
               std::size_t stride, Rng& rng);

}  // namespace odn
