// SPDX-License-Identifier: Apache-2.0
#include "cspan/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace cspan {

namespace {

double evaluate(const TapeProgram& f) {
  Tape tape;
  Var out = f(tape);
  if (out.value().size() != 1) throw ContractError("grad_check: program must be scalar-valued");
  return out.value()[0];
}

}  // namespace

GradCheckResult grad_check_named(const TapeProgram& f,
                                 const std::vector<std::pair<std::string, Tensor*>>& targets,
                                 double h) {
  GradientMap analytic;
  {
    Tape tape;
    Var out = f(tape);
    tape.backward(out);
    analytic = tape.parameter_gradients();
  }

  GradCheckResult result;
  for (const auto& [name, tensor] : targets) {
    auto it = analytic.find(name);
    const Tensor zeros(tensor->shape());
    const Tensor& g = it == analytic.end() ? zeros : it->second;
    for (std::size_t i = 0; i < tensor->size(); ++i) {
      const double saved = (*tensor)[i];
      double plus = 0.0, minus = 0.0;
      try {
        (*tensor)[i] = saved + h;
        plus = evaluate(f);
        (*tensor)[i] = saved - h;
        minus = evaluate(f);
      } catch (const NumericFault& e) {
        (*tensor)[i] = saved;
        throw GradCheckFault(name, i, e.what());
      }
      (*tensor)[i] = saved;
      const double fd = (plus - minus) / (2.0 * h);
      const double ad = g[i];
      const double err = std::abs(ad - fd) / std::max(kRelativeErrorFloor, std::abs(ad) + std::abs(fd));
      ++result.coordinates;
      if (err > result.max_rel_error || result.worst_name.empty()) {
        result.max_rel_error = std::max(err, result.max_rel_error);
        result.worst_name = name;
        result.worst_index = i;
      }
    }
  }
  return result;
}

GradCheckResult grad_check(const std::function<Var(const std::vector<Var>&)>& f,
                           std::vector<Tensor> inputs, double h) {
  std::vector<std::pair<std::string, Tensor*>> targets;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    targets.emplace_back("input" + std::to_string(i), &inputs[i]);
  }
  TapeProgram program = [&](Tape& tape) {
    std::vector<Var> vars;
    for (const auto& [name, tensor] : targets) vars.push_back(tape.parameter(name, *tensor));
    return f(vars);
  };
  return grad_check_named(program, targets, h);
}

}  // namespace cspan
