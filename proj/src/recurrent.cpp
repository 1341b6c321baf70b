// SPDX-License-Identifier: Apache-2.0
#include "cspan/recurrent.hpp"

#include <algorithm>
#include <cmath>

#include "cspan/error.hpp"
#include "cspan/ops.hpp"
#include "cspan/rng.hpp"

namespace cspan {

LstmParams init_lstm(std::size_t input_dim, std::size_t hidden_dim, Rng& rng) {
  const double k = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  LstmParams p;
  p.w_x = Tensor::uniform({input_dim, 4 * hidden_dim}, -k, k, rng);
  p.w_h = Tensor::uniform({hidden_dim, 4 * hidden_dim}, -k, k, rng);
  p.b = Tensor({4 * hidden_dim});
  for (std::size_t j = hidden_dim; j < 2 * hidden_dim; ++j) p.b[j] = kForgetBiasInit;
  return p;
}

LstmState lstm_step(Var projected_input, const LstmState& prev, const LstmVars& p) {
  const std::size_t h = p.w_h.value().dim(0);
  const Tensor& xp = projected_input.value();
  if (xp.rank() != 2 || xp.dim(1) != 4 * h || prev.h.value().shape() != Shape{xp.dim(0), h} ||
      prev.c.value().shape() != prev.h.value().shape()) {
    throw ShapeError("lstm_step: projected input " + shape_str(xp.shape()) + ", state " +
                     shape_str(prev.h.value().shape()) + " for hidden size " + std::to_string(h));
  }
  Var gates = add_broadcast(add(projected_input, matmul(prev.h, p.w_h)), p.b);
  Var i = sigmoid(slice_columns(gates, 0, h));
  Var f = sigmoid(slice_columns(gates, h, h));
  Var g = tanh(slice_columns(gates, 2 * h, h));
  Var o = sigmoid(slice_columns(gates, 3 * h, h));
  Var c = add(hadamard(f, prev.c), hadamard(i, g));
  return {hadamard(o, tanh(c)), c};
}

LstmState lstm_cell(Var x, const LstmState& prev, const LstmVars& p) {
  if (x.value().rank() != 2 || x.value().dim(1) != p.w_x.value().dim(0)) {
    throw ShapeError("lstm_cell: input " + shape_str(x.value().shape()) + " vs W_x " +
                     shape_str(p.w_x.value().shape()));
  }
  return lstm_step(matmul(x, p.w_x), prev, p);
}

Var lstm_scan(Var x, const std::vector<std::size_t>& lengths, const LstmVars& p, bool reverse) {
  const Tensor& xv = x.value();
  if (xv.rank() != 3 || xv.dim(2) != p.w_x.value().dim(0) || lengths.size() != xv.dim(0)) {
    throw ShapeError("lstm_scan: input " + shape_str(xv.shape()) + " vs W_x " +
                     shape_str(p.w_x.value().shape()));
  }
  const std::size_t batch = xv.dim(0), len = xv.dim(1), in = xv.dim(2);
  const std::size_t h = p.w_h.value().dim(0);
  Tape& tape = x.tape();

  Var projected = reshape(matmul(reshape(x, {batch * len, in}), p.w_x), {batch, len, 4 * h});
  LstmState state{tape.constant(Tensor({batch, h})), tape.constant(Tensor({batch, h}))};

  std::vector<Var> outputs;
  std::vector<std::vector<long>> positions;
  const std::size_t steps = std::min(len, *std::max_element(lengths.begin(), lengths.end()));
  for (std::size_t s = 0; s < steps; ++s) {
    // rows past their length compute on a zero input and are never read
    std::vector<long> at(batch, -1);
    for (std::size_t b = 0; b < batch; ++b) {
      if (s < lengths[b]) at[b] = static_cast<long>(reverse ? lengths[b] - 1 - s : s);
    }
    state = lstm_step(gather_steps(projected, at), state, p);
    outputs.push_back(state.h);
    positions.push_back(std::move(at));
  }
  return scatter_steps(outputs, positions, len);
}

Var bilstm(Var x, const std::vector<std::size_t>& lengths,
           const std::vector<BiLstmLayerVars>& layers) {
  if (layers.empty()) throw ContractError("bilstm: no layers");
  Var current = x;
  for (const auto& layer : layers) {
    Var fwd = lstm_scan(current, lengths, layer.forward, false);
    Var bwd = lstm_scan(current, lengths, layer.backward, true);
    current = concat_columns(fwd, bwd);
  }
  return current;
}

}  // namespace cspan
