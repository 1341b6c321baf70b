// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cspan {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Violated precondition on an argument (bad label, non-scalar loss, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Softmax row with no valid entries.
class DegenerateRowError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf produced by an operation.
class NumericFault : public Error {
 public:
  NumericFault(std::string op, std::size_t index)
      : Error("non-finite value in '" + op + "' at flat index " + std::to_string(index)),
        op_(std::move(op)),
        index_(index) {}

  const std::string& op() const { return op_; }
  std::size_t index() const { return index_; }

 private:
  std::string op_;
  std::size_t index_;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace cspan
