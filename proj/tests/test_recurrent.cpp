// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "cspan/error.hpp"
#include "cspan/ops.hpp"
#include "cspan/recurrent.hpp"
#include "cspan/rng.hpp"

using namespace cspan;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Cell {
  Tape tape;
  LstmVars p;
  Cell(Tensor wx, Tensor wh, Tensor b) : wx_(std::move(wx)), wh_(std::move(wh)), b_(std::move(b)) {
    p = {tape.constant(wx_), tape.constant(wh_), tape.constant(b_)};
  }
  Tensor wx_, wh_, b_;
};

Tensor reverse_rows(const Tensor& x, std::size_t len) {
  Tensor out = x;
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t k = 0; k < x.dim(2); ++k) out.at(0, t, k) = x.at(0, len - 1 - t, k);
  return out;
}

}  // namespace

TEST(LstmCell, AllZeroStaysZero) {
  Cell c(Tensor({3, 8}), Tensor({2, 8}), Tensor({8}));
  LstmState s = lstm_cell(c.tape.constant(Tensor({1, 3})), {c.tape.constant(Tensor({1, 2})), c.tape.constant(Tensor({1, 2}))}, c.p);
  for (double v : s.h.value().data()) EXPECT_EQ(v, 0.0);
  for (double v : s.c.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(LstmCell, SaturatedForgetGateKeepsCell) {
  Tensor b({4});
  b[1] = 20.0;  // gate order i, f, g, o
  Cell c(Tensor({1, 4}), Tensor({1, 4}), b);
  LstmState s = lstm_cell(c.tape.constant(Tensor({1, 1})), {c.tape.constant(Tensor({1, 1})), c.tape.constant(Tensor({1, 1}, 1.0))}, c.p);
  EXPECT_NEAR(s.c.value()[0], 1.0, 1e-8);
}

TEST(LstmCell, ScalarHandEvaluation) {
  Cell c(Tensor({1, 4}, 1.0), Tensor({1, 4}, 1.0), Tensor({4}));
  LstmState s = lstm_cell(c.tape.constant(Tensor({1, 1}, 1.0)), {c.tape.constant(Tensor({1, 1})), c.tape.constant(Tensor({1, 1}))}, c.p);
  const double cell = sig(1.0) * std::tanh(1.0);
  EXPECT_NEAR(s.c.value()[0], cell, 1e-15);
  EXPECT_NEAR(s.h.value()[0], sig(1.0) * std::tanh(cell), 1e-15);
  EXPECT_NEAR(s.h.value()[0], 0.369606, 1e-6);
}

TEST(InitLstm, RangesAndForgetBias) {
  Rng rng(1);
  const LstmParams p = init_lstm(8, 4, rng);
  EXPECT_EQ(p.w_x.shape(), (Shape{8, 16}));
  EXPECT_EQ(p.w_h.shape(), (Shape{4, 16}));
  for (double v : p.w_x.data()) EXPECT_LE(std::abs(v), 0.5);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(p.b[i], (i >= 4 && i < 8) ? kForgetBiasInit : 0.0);
}

TEST(Bilstm, SingleStepSeesSameInputBothWays) {
  Rng rng(2);
  const LstmParams f = init_lstm(4, 2, rng), b = init_lstm(4, 2, rng);
  Tape tape;
  std::vector<BiLstmLayerVars> layers = {{{tape.constant(f.w_x), tape.constant(f.w_h), tape.constant(f.b)},
                                          {tape.constant(b.w_x), tape.constant(b.w_h), tape.constant(b.b)}}};
  const Tensor x = Tensor::uniform({1, 1, 4}, -1, 1, rng);
  Var h = bilstm(tape.constant(x), {1}, layers);
  ASSERT_EQ(h.shape(), (Shape{1, 1, 4}));
  Var zero = tape.constant(Tensor({1, 2}));
  LstmState fs = lstm_cell(tape.constant(x.reshaped({1, 4})), {zero, zero}, layers[0].forward);
  LstmState bs = lstm_cell(tape.constant(x.reshaped({1, 4})), {zero, zero}, layers[0].backward);
  EXPECT_NEAR(h.value()[0], fs.h.value()[0], 1e-14);
  EXPECT_NEAR(h.value()[3], bs.h.value()[1], 1e-14);
}

TEST(Bilstm, BackwardScanIsForwardOverReversedInput) {
  Rng rng(3);
  const LstmParams p = init_lstm(3, 2, rng);
  Tape tape;
  LstmVars v{tape.constant(p.w_x), tape.constant(p.w_h), tape.constant(p.b)};
  const std::size_t L = 6;
  const Tensor x = Tensor::uniform({1, L, 3}, -1, 1, rng);
  const Tensor back = lstm_scan(tape.constant(x), {L}, v, true).value();
  const Tensor fwd_rev = lstm_scan(tape.constant(reverse_rows(x, L)), {L}, v, false).value();
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(back.at(0, t, k), fwd_rev.at(0, L - 1 - t, k));
}

TEST(Bilstm, PaddingTransparentAndZeroed) {
  Rng rng(4);
  const LstmParams f = init_lstm(3, 2, rng), b = init_lstm(3, 2, rng);
  Tape tape;
  std::vector<BiLstmLayerVars> layers = {{{tape.constant(f.w_x), tape.constant(f.w_h), tape.constant(f.b)},
                                          {tape.constant(b.w_x), tape.constant(b.w_h), tape.constant(b.b)}}};
  const Tensor solo = Tensor::uniform({1, 3, 3}, -1, 1, rng);
  Tensor padded({2, 5, 3}, 9.0);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t k = 0; k < 3; ++k) padded.at(0, t, k) = solo.at(0, t, k);
  const Tensor a = bilstm(tape.constant(solo), {3}, layers).value();
  const Tensor p = bilstm(tape.constant(padded), {3, 5}, layers).value();
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(p.at(0, t, k), a.at(0, t, k), 1e-12);
  for (std::size_t t = 3; t < 5; ++t)
    for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(p.at(0, t, k), 0.0);
}

TEST(Bilstm, StackKeepsDimension) {
  Rng rng(5);
  const std::size_t d = 6;
  Tape tape;
  std::vector<LstmParams> store;
  for (int i = 0; i < 6; ++i) store.push_back(init_lstm(d, d / 2, rng));
  std::vector<BiLstmLayerVars> layers;
  for (int l = 0; l < 3; ++l) {
    auto& f = store[2 * l];
    auto& b = store[2 * l + 1];
    layers.push_back({{tape.constant(f.w_x), tape.constant(f.w_h), tape.constant(f.b)},
                      {tape.constant(b.w_x), tape.constant(b.w_h), tape.constant(b.b)}});
  }
  Var h = bilstm(tape.constant(Tensor::uniform({2, 4, d}, -1, 1, rng)), {4, 2}, layers);
  EXPECT_EQ(h.shape(), (Shape{2, 4, d}));
}
