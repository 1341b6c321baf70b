// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "cspan/ops.hpp"
#include "cspan/tape.hpp"
#include "cspan/tensor.hpp"

namespace cspan {

/// Learned scale/shift of a layer norm, as tape values.
struct LayerNormVars {
  Var gamma;
  Var beta;
};

/// Attention over a padded stack of sequences.
struct AttentionOutput {
  Var output;   ///< [B, L, d], layer-normed
  Var weights;  ///< [B, L, L], rows stochastic over valid keys
  Var scores;   ///< [B, L, L], pre-softmax (already divided by sqrt(d))
};

/// softmax(X Xᵀ / sqrt(d)) X followed by a per-row layer norm. No
/// query/key/value projections: the input rows serve all three roles.
/// Keys at t >= lengths[b] are masked out.
AttentionOutput semantic_self_attention(Var x, const std::vector<std::size_t>& lengths,
                                        const LayerNormVars& ln);

constexpr double kPositionBase = 10000.0;

/// p[t][2i] = sin(t / 10000^(2i/d)), p[t][2i+1] = cos(same), t from 0.
/// Throws ContractError for odd d.
Tensor sinusoidal_pe(std::size_t length, std::size_t dim);

/// Semantic self-attention applied to X + P (P broadcast over the batch).
AttentionOutput additive_pe_attention(Var x, const Tensor& pe,
                                      const std::vector<std::size_t>& lengths,
                                      const LayerNormVars& ln);

/// Unscaled pieces of <x_i + p_i, x_j + p_j> for one sequence.
struct ScoreTerms {
  Tensor semantic;    ///< <x_i, x_j>
  Tensor positional;  ///< <p_i, p_j>
  Tensor word_pos;    ///< <x_i, p_j>
  Tensor pos_word;    ///< <p_i, x_j>
};

/// Splits the additive-encoding score matrix of D [L, d] and P [L, d] into
/// its four bilinear terms.
ScoreTerms decompose_scores(const Tensor& d, const Tensor& p);

constexpr std::size_t kDefaultRelativeClip = 16;

/// Offset j - i clipped to [-clip, clip] and shifted to a row of R.
std::size_t relative_index(std::size_t i, std::size_t j, std::size_t clip);

/// Scores <x_i, x_j + r_clip(j-i)> / sqrt(d) with learned offsets R
/// [(2·clip+1), d] applied to keys only; values are the plain rows.
AttentionOutput relative_pe_attention(Var x, Var r, std::size_t clip,
                                      const std::vector<std::size_t>& lengths,
                                      const LayerNormVars& ln);

}  // namespace cspan
