#include "odn/tensor/tape.hpp"

#include <algorithm>

#include "odn/core/error.hpp"

namespace odn {

Parameter::Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
  grad = Tensor(value.shape(), 0.0);
}

const Tensor& Var::value() const {
  if (!tape_) throw DimensionError("use of an unbound Var");
  return tape_->value(*this);
}

bool Var::tracked() const { return tape_ && tape_->tracked(*this); }

Var Tape::push(Tensor value, bool tracked, Parameter* param) {
  nodes_.push_back(Node{std::move(value), {}, tracked, param});
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owner(Var v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) {
    throw DimensionError("Var does not belong to this tape");
  }
}

Var Tape::constant(Tensor value) { return push(std::move(value), false, nullptr); }
Var Tape::variable(Tensor value) { return push(std::move(value), true, nullptr); }
Var Tape::parameter(Parameter& p) {
  return gradients_ ? push(p.value, true, &p) : push(p.value, false, nullptr);
}

const Tensor& Tape::value(Var v) const {
  check_owner(v);
  return nodes_[v.id_].value;
}

bool Tape::tracked(Var v) const {
  check_owner(v);
  return nodes_[v.id_].tracked;
}

Tensor Tape::gradient(Var v) const {
  check_owner(v);
  const Node& n = nodes_[v.id_];
  if (n.grad.empty()) return Tensor(n.value.shape(), 0.0);
  return Tensor(n.value.shape(), n.grad);
}

Var Tape::record(std::string_view op, Tensor out, std::initializer_list<Var> inputs, BackwardRule rule) {
  return record(op, std::move(out), std::span<const Var>(inputs.begin(), inputs.size()), std::move(rule));
}

Var Tape::record(std::string_view op, Tensor out, std::span<const Var> inputs, BackwardRule rule) {
  if (!all_finite(out.values())) {
    throw DomainError("non-finite value produced by " + std::string(op));
  }
  bool any_tracked = false;
  for (const Var& v : inputs) {
    check_owner(v);
    any_tracked = any_tracked || nodes_[v.id_].tracked;
  }
  Var result = push(std::move(out), any_tracked, nullptr);
  if (any_tracked) {
    std::vector<std::size_t> ids;
    ids.reserve(inputs.size());
    for (const Var& v : inputs) ids.push_back(v.id_);
    ops_.push_back(Op{std::move(ids), result.id_, std::move(rule)});
  }
  return result;
}

std::span<double> Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.tracked) return {};
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

std::span<const double> Tape::upstream(std::size_t id) const { return nodes_[id].grad; }

std::size_t Tape::backward(Var loss) {
  check_owner(loss);
  Node& root = nodes_[loss.id_];
  if (root.value.size() != 1) {
    throw DimensionError("backward() needs a scalar loss, got shape " + to_string(root.value.shape()));
  }
  if (!root.tracked) return 0;
  grad_buffer(loss.id_)[0] += 1.0;

  std::size_t replayed = 0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    ++replayed;
    if (nodes_[it->output].grad.empty()) continue;  // output does not reach the loss
    it->backward(*this, it->output);
  }
  for (Node& n : nodes_) {
    if (n.param && !n.grad.empty()) {
      double* g = n.param->grad.data();
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
    }
  }
  return replayed;
}

}  // namespace odn
