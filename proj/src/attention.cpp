// SPDX-License-Identifier: Apache-2.0
#include "cspan/attention.hpp"

#include <algorithm>
#include <cmath>

#include "cspan/error.hpp"

namespace cspan {

namespace {

void check_sequence_stack(const char* op, const Tensor& x, const std::vector<std::size_t>& lengths) {
  if (x.rank() != 3) throw ShapeError(std::string(op) + ": expected [B, L, d], got " + shape_str(x.shape()));
  if (lengths.size() != x.dim(0)) throw ShapeError(std::string(op) + ": lengths/batch mismatch");
  for (std::size_t len : lengths) {
    if (len == 0) throw DegenerateRowError(std::string(op) + ": sequence with no valid position");
    if (len > x.dim(1)) throw ShapeError(std::string(op) + ": length exceeds padded width");
  }
}

AttentionOutput attend(Var x, Var scores, const std::vector<std::size_t>& lengths,
                       const LayerNormVars& ln) {
  const std::size_t len = x.value().dim(1);
  Var weights = row_softmax(scores, key_mask(lengths, len, len));
  Var mixed = batched_matmul(weights, x);
  return {layer_norm(mixed, ln.gamma, ln.beta), weights, scores};
}

}  // namespace

AttentionOutput semantic_self_attention(Var x, const std::vector<std::size_t>& lengths,
                                        const LayerNormVars& ln) {
  check_sequence_stack("semantic_self_attention", x.value(), lengths);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(x.value().dim(2)));
  Var scores = scale(batched_matmul(x, x, /*transpose_b=*/true), inv_sqrt_d);
  return attend(x, scores, lengths, ln);
}

Tensor sinusoidal_pe(std::size_t length, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) {
    throw ContractError("sinusoidal_pe: dimension must be even and positive, got " +
                        std::to_string(dim));
  }
  Tensor p({length, dim});
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t i = 0; i < dim / 2; ++i) {
      const double angle = static_cast<double>(t) /
                           std::pow(kPositionBase, static_cast<double>(2 * i) / static_cast<double>(dim));
      p.at(t, 2 * i) = std::sin(angle);
      p.at(t, 2 * i + 1) = std::cos(angle);
    }
  }
  return p;
}

AttentionOutput additive_pe_attention(Var x, const Tensor& pe,
                                      const std::vector<std::size_t>& lengths,
                                      const LayerNormVars& ln) {
  check_sequence_stack("additive_pe_attention", x.value(), lengths);
  const Shape want{x.value().dim(1), x.value().dim(2)};
  if (pe.shape() != want) {
    throw ShapeError("additive_pe_attention: encoding " + shape_str(pe.shape()) +
                     " does not match sequence " + shape_str(want));
  }
  Var shifted = add_broadcast(x, x.tape().constant(pe));
  return semantic_self_attention(shifted, lengths, ln);
}

ScoreTerms decompose_scores(const Tensor& d, const Tensor& p) {
  if (d.rank() != 2 || d.shape() != p.shape()) {
    throw ShapeError("decompose_scores: " + shape_str(d.shape()) + " vs " + shape_str(p.shape()));
  }
  const std::size_t len = d.dim(0), dim = d.dim(1);
  auto gram = [&](const Tensor& a, const Tensor& b) {
    Tensor g({len, len});
    for (std::size_t i = 0; i < len; ++i)
      for (std::size_t j = 0; j < len; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < dim; ++k) s += a.at(i, k) * b.at(j, k);
        g.at(i, j) = s;
      }
    return g;
  };
  return {gram(d, d), gram(p, p), gram(d, p), gram(p, d)};
}

std::size_t relative_index(std::size_t i, std::size_t j, std::size_t clip) {
  const long rel = static_cast<long>(j) - static_cast<long>(i);
  const long c = static_cast<long>(clip);
  return static_cast<std::size_t>(std::clamp(rel, -c, c) + c);
}

AttentionOutput relative_pe_attention(Var x, Var r, std::size_t clip,
                                      const std::vector<std::size_t>& lengths,
                                      const LayerNormVars& ln) {
  check_sequence_stack("relative_pe_attention", x.value(), lengths);
  const std::size_t batch = x.value().dim(0), len = x.value().dim(1), dim = x.value().dim(2);
  if (r.value().shape() != Shape{2 * clip + 1, dim}) {
    throw ShapeError("relative_pe_attention: offsets " + shape_str(r.value().shape()) +
                     " expected " + shape_str({2 * clip + 1, dim}));
  }
  Var content = batched_matmul(x, x, /*transpose_b=*/true);
  Var x_dot_r = reshape(matmul(reshape(x, {batch * len, dim}), r, false, true),
                        {batch, len, 2 * clip + 1});
  Var position = relative_gather(x_dot_r, clip);
  Var scores = scale(add(content, position), 1.0 / std::sqrt(static_cast<double>(dim)));
  return attend(x, scores, lengths, ln);
}

}  // namespace cspan
