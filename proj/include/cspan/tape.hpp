// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cspan/tensor.hpp"

namespace cspan {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

using GradientMap = std::map<std::string, Tensor>;

/// Receives the gradient of the loss w.r.t. an op's output and adds the
/// contributions to its inputs through Tape::grad_target.
using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

/// Linear record of a forward computation.
///
/// Nodes are appended in evaluation order, so the record is topologically
/// sorted by construction and backward() is a single reverse sweep. One tape
/// per training step; not safe for concurrent mutation.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Tensor value);
  /// Leaf that receives a gradient (owned copy).
  Var input(Tensor value);
  /// Named leaf referencing externally owned storage; `value` must outlive
  /// the tape. Registering the same name twice returns the same node.
  /// Frozen parameters (trainable = false) get no gradient.
  Var parameter(const std::string& name, const Tensor& value, bool trainable = true);

  /// Appends an op node. `backward` may be empty for non-differentiable ops.
  Var record(std::string_view op, Tensor value, std::initializer_list<Var> inputs,
             BackwardFn backward);
  Var record(std::string_view op, Tensor value, const std::vector<Var>& inputs,
             BackwardFn backward);

  const Tensor& value(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const std::string& op_name(std::size_t id) const { return nodes_[id].op; }

  /// Gradient accumulator of node `id`, zero-allocated on first use, or
  /// nullptr when the node does not require a gradient.
  Tensor* grad_target(std::size_t id);
  /// Accumulated gradient, or nullptr if backward never reached the node.
  const Tensor* grad(std::size_t id) const;
  const Tensor* grad(Var v) const { return grad(v.id()); }

  /// Reverse sweep from a scalar loss.
  void backward(Var loss);

  /// Gradients of every registered parameter; zeros where no path exists.
  GradientMap parameter_gradients() const;

  std::size_t size() const { return nodes_.size(); }

  /// Fail fast on NaN/Inf in any recorded value.
  void set_check_finite(bool on) { check_finite_ = on; }

 private:
  struct Node {
    std::string op;
    Tensor owned;
    const Tensor* external = nullptr;
    BackwardFn backward;
    bool requires_grad = false;
    Tensor grad;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
  std::unordered_map<std::string, std::size_t> params_;
  std::vector<std::pair<std::string, std::size_t>> param_order_;
  bool check_finite_ = true;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

}  // namespace cspan
