// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cspan/grad_check.hpp"
#include "cspan/model.hpp"

namespace cspan {

constexpr double kGradCheckTolerance = 1e-4;

/// A named differentiable op exercised at random inputs drawn from `seed`.
struct GradCheckCase {
  std::string op;
  std::function<GradCheckResult(std::uint64_t seed)> run;
};

/// Every op with a backward rule, the attention/recurrent blocks, and the
/// end-to-end classifier for each variant ("pipeline_a" .. "pipeline_e",
/// "pipeline_lstm").
std::vector<GradCheckCase> builtin_gradcheck_cases();

/// Whole classifier (L=5, d=8, m=2, three classes) on a two-document batch.
GradCheckResult pipeline_gradcheck(Variant variant, std::uint64_t seed);

struct GradCheckRow {
  std::string op;
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst;  ///< "<tensor>[<index>]" or the failure message
  bool passed = false;
};

/// Runs each case for seeds first_seed .. first_seed + seeds - 1 and keeps
/// the worst error per op. A thrown error fails the row.
std::vector<GradCheckRow> run_gradcheck_suite(const std::vector<GradCheckCase>& cases,
                                              std::uint64_t first_seed, std::size_t seeds,
                                              double tolerance = kGradCheckTolerance);

}  // namespace cspan
