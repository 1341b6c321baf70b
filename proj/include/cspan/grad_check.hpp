// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cspan/error.hpp"
#include "cspan/tape.hpp"

namespace cspan {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_name;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
};

/// Raised when an evaluation inside grad_check produces NaN/Inf.
class GradCheckFault : public Error {
 public:
  GradCheckFault(const std::string& name, std::size_t index, const std::string& what)
      : Error("grad_check: non-finite evaluation perturbing '" + name + "'[" +
              std::to_string(index) + "]: " + what),
        name_(name),
        index_(index) {}
  const std::string& name() const { return name_; }
  std::size_t index() const { return index_; }

 private:
  std::string name_;
  std::size_t index_;
};

/// Builds a scalar on a fresh tape. The program must register each checked
/// tensor with Tape::parameter under its name.
/// Gradients below this are compared on absolute error (scaled by the floor);
/// central differences at h = 1e-5 carry ~1e-11 of rounding noise.
constexpr double kRelativeErrorFloor = 1e-6;

using TapeProgram = std::function<Var(Tape&)>;

/// Central-difference check of every coordinate of the named tensors.
/// Relative error per coordinate is |g_ad - g_fd| / max(floor, |g_ad| + |g_fd|),
/// with floor = kRelativeErrorFloor.
/// The tensors are perturbed in place and restored.
GradCheckResult grad_check_named(const TapeProgram& f,
                                 const std::vector<std::pair<std::string, Tensor*>>& targets,
                                 double h = 1e-5);

/// Convenience form over anonymous inputs.
GradCheckResult grad_check(const std::function<Var(const std::vector<Var>&)>& f,
                           std::vector<Tensor> inputs, double h = 1e-5);

}  // namespace cspan
