// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cspan/tape.hpp"

namespace cspan {

/// Validity flags aligned with a tensor's flat layout (1 = valid).
/// An empty mask means "everything valid".
using Mask = std::vector<std::uint8_t>;

/// Mask for a [B, R, L] tensor whose last axis indexes positions:
/// entry (b, r, j) is valid iff j < lengths[b].
Mask key_mask(const std::vector<std::size_t>& lengths, std::size_t rows_per_batch,
              std::size_t length);

// Linear algebra ---------------------------------------------------------------

/// C = op(A)·op(B) for matrices, op = optional transpose.
Var matmul(Var a, Var b, bool transpose_a = false, bool transpose_b = false);

/// Per-batch product of [B, m, k] and [B, k, n] (or [B, n, k] when
/// transpose_b) stacks.
Var batched_matmul(Var a, Var b, bool transpose_b = false);

/// Swaps the last two axes of a rank-2 or rank-3 tensor.
Var transpose_last2(Var x);

// Normalizers ----------------------------------------------------------------

/// Softmax over the last axis. Masked entries get exactly 0; a row with no
/// valid entry throws DegenerateRowError.
Var row_softmax(Var x, const Mask& mask = {});

constexpr double kLayerNormEps = 1e-5;

/// Per-row standardization over the last axis with biased variance, then
/// gamma ⊙ x̂ + beta.
Var layer_norm(Var x, Var gamma, Var beta, double eps = kLayerNormEps);

// Pointwise ------------------------------------------------------------------

Var tanh(Var x);
Var sigmoid(Var x);
Var add(Var a, Var b);
Var subtract(Var a, Var b);
Var scale(Var x, double s);
Var hadamard(Var a, Var b);

/// x + y where y's shape is a suffix of x's (bias over rows, a [L, d]
/// matrix over a batch, ...).
Var add_broadcast(Var x, Var y);

// Shape ----------------------------------------------------------------------

/// Concatenation along the last axis; leading shapes must agree.
Var concat_columns(Var a, Var b);
/// Columns [begin, begin + width) of the last axis.
Var slice_columns(Var x, std::size_t begin, std::size_t width);
Var reshape(Var x, Shape shape);

// Reductions -----------------------------------------------------------------

Var sum(Var x);
Var mean(Var x);

// Sequence plumbing ----------------------------------------------------------

/// Picks row x[b, steps[b], :] for every b from a [B, L, n] tensor. A
/// negative step yields a zero row.
Var gather_steps(Var x, const std::vector<long>& steps);

/// Inverse of gather_steps over a whole scan: out[b, positions[s][b], :] =
/// steps[s][b, :]. Negative positions are dropped, unassigned rows are zero.
Var scatter_steps(const std::vector<Var>& steps, const std::vector<std::vector<long>>& positions,
                  std::size_t length);

/// Row lookup table[ids] for a [B, L] id grid. Gradients for `pad_id` rows
/// are discarded so the padding row stays fixed.
Var embedding_lookup(Var table, const std::vector<std::size_t>& ids, std::size_t batch,
                     std::size_t length, std::size_t pad_id = 0);

/// out[b, i, j] = x[b, i, clamp(j - i, -clip, clip) + clip] for a
/// [B, L, 2·clip+1] tensor; output is [B, L, L].
Var relative_gather(Var x, std::size_t clip);

// Loss -----------------------------------------------------------------------

/// Mean over rows of -log softmax(logits)[label], via log-sum-exp.
Var cross_entropy(Var logits, const std::vector<std::size_t>& labels);

/// Row-wise log-sum-exp stable softmax of plain values (no tape).
Tensor softmax_rows(const Tensor& logits);

}  // namespace cspan
