// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <deque>
#include <string>
#include <unordered_map>

#include "cspan/tensor.hpp"

namespace cspan {

struct Parameter {
  std::string name;
  Tensor value;
  /// Subject to weight decay (false for biases and norm scales).
  bool decay = true;
  /// Row 0 is the padding embedding: never decayed or updated.
  bool pad_row_frozen = false;
  bool trainable = true;
};

/// Ordered, name-addressable parameter storage. References stay valid as
/// parameters are added, so tapes may hold pointers to the values.
class ParameterSet {
 public:
  Parameter& add(Parameter p);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  Tensor& value(const std::string& name) { return at(name).value; }
  const Tensor& value(const std::string& name) const { return at(name).value; }

  std::size_t size() const { return params_.size(); }
  std::size_t total_elements() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::deque<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace cspan
