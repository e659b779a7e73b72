#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "odn/tensor/tensor.hpp"

namespace odn {

/// A trainable tensor together with its accumulated gradient.
struct Parameter {
  Parameter(std::string name, Tensor value);

  std::string name;
  Tensor value;
  Tensor grad;
};

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool tracked() const;
  explicit operator bool() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode computation tape. Operations are appended in evaluation
/// order, so replaying them backwards visits every operation once after all
/// of its consumers.
class Tape {
 public:
  using BackwardRule = std::function<void(Tape&, std::size_t output)>;

  Tape() = default;
  /// With gradients disabled parameters enter as constants and nothing is recorded.
  explicit Tape(bool gradients) : gradients_(gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  /// Tracked leaf whose gradient is added to `p.grad` by backward().
  Var parameter(Parameter& p);

  const Tensor& value(Var v) const;
  bool tracked(Var v) const;
  /// Gradient reached so far; zeros when the node received none.
  Tensor gradient(Var v) const;

  /// Seeds d(loss)/d(loss) = 1 and replays every recorded operation in
  /// reverse. Returns the number of operations replayed.
  std::size_t backward(Var loss);

  std::size_t op_count() const noexcept { return ops_.size(); }
  std::size_t node_count() const noexcept { return nodes_.size(); }

  // -- authoring interface for operations --

  /// Appends a node holding `out`. The operation is recorded only when one of
  /// the inputs is tracked. Throws DomainError if `out` holds NaN/Inf.
  Var record(std::string_view op, Tensor out, std::initializer_list<Var> inputs, BackwardRule rule);
  Var record(std::string_view op, Tensor out, std::span<const Var> inputs, BackwardRule rule);

  /// Gradient buffer of a tracked node (allocated as zeros on first use);
  /// empty for untracked nodes, so rules skip inputs that need no gradient.
  std::span<double> grad_buffer(std::size_t id);
  std::span<const double> upstream(std::size_t id) const;

 private:
  struct Node {
    Tensor value;
    AlignedBuffer grad;
    bool tracked = false;
    Parameter* param = nullptr;
  };
  struct Op {
    std::vector<std::size_t> inputs;
    std::size_t output;
    BackwardRule backward;
  };

  Var push(Tensor value, bool tracked, Parameter* param);
  void check_owner(Var v) const;

  std::deque<Node> nodes_;
  std::vector<Op> ops_;
  bool gradients_ = true;
};

}  // namespace odn
