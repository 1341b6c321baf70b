// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "cspan/tape.hpp"
#include "cspan/tensor.hpp"

namespace cspan {

class Rng;

/// Weights of one LSTM direction. Gate blocks along the 4h axis are ordered
/// (input, forget, cell, output); no peepholes.
struct LstmParams {
  Tensor w_x;  ///< [d_in, 4h]
  Tensor w_h;  ///< [h, 4h]
  Tensor b;    ///< [4h]

  std::size_t input_dim() const { return w_x.dim(0); }
  std::size_t hidden_dim() const { return w_h.dim(0); }
};

constexpr double kForgetBiasInit = 1.0;

/// Uniform [-1/sqrt(h), 1/sqrt(h)] weights, forget bias 1, other biases 0.
LstmParams init_lstm(std::size_t input_dim, std::size_t hidden_dim, Rng& rng);

/// Tape view of LstmParams.
struct LstmVars {
  Var w_x;
  Var w_h;
  Var b;
};

struct LstmState {
  Var h;  ///< [B, h]
  Var c;  ///< [B, h]
};

/// One step: [i,f,g,o] = x W_x + h W_h + b; c' = σ(f)⊙c + σ(i)⊙tanh(g);
/// h' = σ(o)⊙tanh(c').
LstmState lstm_cell(Var x, const LstmState& prev, const LstmVars& p);

/// Same step from an already projected input x W_x ([B, 4h]).
LstmState lstm_step(Var projected_input, const LstmState& prev, const LstmVars& p);

/// Forward/backward weights of one stacked layer.
struct BiLstmLayerVars {
  LstmVars forward;
  LstmVars backward;
};

/// Bidirectional scan over a padded [B, L, d_in] stack. The forward
/// direction runs t = 0..len-1, the backward one len-1..0, both from zero
/// state; each layer outputs [B, L, 2h] with zero rows at padded positions
/// and feeds the next layer.
Var bilstm(Var x, const std::vector<std::size_t>& lengths,
           const std::vector<BiLstmLayerVars>& layers);

/// One direction of one layer, [B, L, h]; exposed for tests.
Var lstm_scan(Var x, const std::vector<std::size_t>& lengths, const LstmVars& p, bool reverse);

}  // namespace cspan
