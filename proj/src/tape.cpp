// SPDX-License-Identifier: Apache-2.0
#include "cspan/tape.hpp"

#include "cspan/error.hpp"

namespace cspan {

Var Tape::push(Node node) {
  if (check_finite_) {
    const Tensor& v = node.external ? *node.external : node.owned;
    if (auto i = v.first_non_finite(); i != v.size()) throw NumericFault(node.op, i);
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.op = "constant";
  n.owned = std::move(value);
  return push(std::move(n));
}

Var Tape::input(Tensor value) {
  Node n;
  n.op = "input";
  n.owned = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::parameter(const std::string& name, const Tensor& value, bool trainable) {
  if (auto it = params_.find(name); it != params_.end()) {
    if (nodes_[it->second].external != &value) {
      throw ContractError("parameter '" + name + "' registered with two different tensors");
    }
    return Var(this, it->second);
  }
  Node n;
  n.op = "parameter:" + name;
  n.external = &value;
  n.requires_grad = trainable;
  Var v = push(std::move(n));
  params_.emplace(name, v.id());
  param_order_.emplace_back(name, v.id());
  return v;
}

Var Tape::record(std::string_view op, Tensor value, std::initializer_list<Var> inputs,
                 BackwardFn backward) {
  return record(op, std::move(value), std::vector<Var>(inputs), std::move(backward));
}

Var Tape::record(std::string_view op, Tensor value, const std::vector<Var>& inputs,
                 BackwardFn backward) {
  Node n;
  n.op = std::string(op);
  n.owned = std::move(value);
  for (const Var& in : inputs) {
    if (&in.tape() != this) throw ContractError("op '" + n.op + "' mixes tapes");
    n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& n = nodes_.at(id);
  return n.external ? *n.external : n.owned;
}

Tensor* Tape::grad_target(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty() && value(id).size() != 0) n.grad = Tensor(value(id).shape());
  return &n.grad;
}

const Tensor* Tape::grad(std::size_t id) const {
  const Node& n = nodes_.at(id);
  return n.grad.empty() ? nullptr : &n.grad;
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw ContractError("backward: loss belongs to another tape");
  if (loss.value().size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " +
                        shape_str(loss.value().shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  Tensor* seed = grad_target(loss.id());
  if (!seed) return;
  (*seed)[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    // grad is moved out so the callback can freely touch other nodes
    Tensor g = std::move(n.grad);
    n.backward(*this, g);
    n.grad = std::move(g);
  }
}

GradientMap Tape::parameter_gradients() const {
  GradientMap out;
  for (const auto& [name, id] : param_order_) {
    const Node& n = nodes_[id];
    out.emplace(name, n.grad.empty() ? Tensor(n.external->shape()) : n.grad);
  }
  return out;
}

}  // namespace cspan
