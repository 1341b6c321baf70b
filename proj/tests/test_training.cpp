// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "cspan/error.hpp"
#include "cspan/checkpoint.hpp"
#include "cspan/training.hpp"
#include "model_fixtures.hpp"

using namespace cspan;
using namespace cspan::testing_util;

TEST(LrSchedule, DropsAtTwentyAndTwentyFive) {
  const TrainConfig c;
  EXPECT_DOUBLE_EQ(lr_at(0, c), 1e-3);
  EXPECT_DOUBLE_EQ(lr_at(19, c), 1e-3);
  EXPECT_NEAR(lr_at(20, c), 1e-4, 1e-18);
  EXPECT_NEAR(lr_at(24, c), 1e-4, 1e-18);
  EXPECT_NEAR(lr_at(25, c), 1e-5, 1e-19);
  EXPECT_NEAR(lr_at(29, c), 1e-5, 1e-19);
}

namespace {

ParameterSet scalar_param(double v, bool decay = true) {
  ParameterSet ps;
  Parameter p{"w", Tensor::vector({v})};
  p.decay = decay;
  ps.add(p);
  return ps;
}

}  // namespace

TEST(Adam, ZeroGradientNoDecayIsNoOp) {
  TrainConfig c;
  c.weight_decay = 0.0;
  ParameterSet ps = scalar_param(0.7);
  AdamState s;
  adam_step(ps, {{"w", Tensor::vector({0.0})}}, s, 1, c.lr, c);
  EXPECT_EQ(ps.value("w")[0], 0.7);
}

TEST(Adam, FirstStepIsSignTimesLr) {
  TrainConfig c;
  c.weight_decay = 0.0;
  for (double g : {3.0, -0.02}) {
    ParameterSet ps = scalar_param(1.0);
    AdamState s;
    adam_step(ps, {{"w", Tensor::vector({g})}}, s, 1, 1e-3, c);
    const double want = 1.0 - 1e-3 * g / (std::abs(g) + 1e-8);
    EXPECT_NEAR(ps.value("w")[0], want, 1e-15);
  }
}

TEST(Adam, MatchesHandRolledTwoSteps) {
  TrainConfig c;
  c.weight_decay = 0.01;
  ParameterSet ps = scalar_param(0.5);
  AdamState s;
  const double g1 = 0.3, g2 = -0.1;
  adam_step(ps, {{"w", Tensor::vector({g1})}}, s, 1, 0.1, c);
  adam_step(ps, {{"w", Tensor::vector({g2})}}, s, 2, 0.1, c);
  double w = 0.5, m = 0, v = 0;
  for (auto [t, g] : {std::pair{1, g1}, std::pair{2, g2}}) {
    const double ge = g + 0.01 * w;
    m = 0.9 * m + 0.1 * ge;
    v = 0.999 * v + 0.001 * ge * ge;
    w -= 0.1 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
  }
  EXPECT_NEAR(ps.value("w")[0], w, 1e-15);
}

TEST(Adam, DecayOnlyShrinksTowardZero) {
  TrainConfig c;
  c.weight_decay = 1e-4;
  for (double v0 : {0.8, -0.8}) {
    ParameterSet ps = scalar_param(v0);
    AdamState s;
    adam_step(ps, {{"w", Tensor::vector({0.0})}}, s, 1, 1e-3, c);
    const double v = ps.value("w")[0];
    EXPECT_LT(std::abs(v), std::abs(v0));
    EXPECT_EQ(std::signbit(v), std::signbit(v0));
  }
}

TEST(Adam, ExcludedParametersAreNotDecayed) {
  TrainConfig c;
  c.weight_decay = 0.5;
  ParameterSet ps = scalar_param(0.8, false);
  AdamState s;
  adam_step(ps, {{"w", Tensor::vector({0.0})}}, s, 1, 1e-3, c);
  EXPECT_EQ(ps.value("w")[0], 0.8);
}

TEST(Adam, PadRowNeverMoves) {
  TrainConfig c;
  ParameterSet ps;
  Parameter emb{"emb.table", Tensor({3, 2}, 0.25)};
  emb.pad_row_frozen = true;
  ps.add(emb);
  AdamState s;
  adam_step(ps, {{"emb.table", Tensor({3, 2}, 1.0)}}, s, 1, 1e-2, c);
  EXPECT_EQ(ps.value("emb.table").at(0, 0), 0.25);
  EXPECT_EQ(ps.value("emb.table").at(0, 1), 0.25);
  EXPECT_LT(ps.value("emb.table").at(1, 0), 0.25);
}

TEST(Adam, ZeroLrLeavesModelBitIdentical) {
  CspanModel m = small_model(small_config(Variant::kCascade), 1);
  ParameterSet before = m.parameters();
  GradientMap grads;
  Rng rng(1);
  for (const auto& p : m.parameters()) grads[p.name] = Tensor::uniform(p.value.shape(), -1, 1, rng);
  TrainConfig c;
  AdamState s;
  adam_step(m.parameters(), grads, s, 1, 0.0, c);
  for (const auto& p : before) EXPECT_EQ(p.value, m.parameters().value(p.name)) << p.name;
}

TEST(Adam, ShapeMismatchIsContractError) {
  TrainConfig c;
  ParameterSet ps = scalar_param(1.0);
  AdamState s;
  EXPECT_THROW(adam_step(ps, {{"w", Tensor::vector({1.0, 2.0})}}, s, 1, 1e-3, c), ContractError);
  EXPECT_THROW(adam_step(ps, {{"w", Tensor::vector({1.0})}}, s, 0, 1e-3, c), ContractError);
}

TEST(MetricRecord, JsonKeysInOrder) {
  const MetricRecord r{3, "test", 0.5, 0.75, 1e-4, 0.0};
  EXPECT_EQ(r.to_json(), R"({"epoch":3,"split":"test","loss":0.5,"accuracy":0.75,"lr":0.0001,"wall_seconds":0.0})");
}

namespace {

Corpus order_corpus(std::size_t n_train, std::size_t n_test, std::size_t len) {
  return build_corpus(make_order_task(n_train, len, 1), make_order_task(n_test, len, 2));
}

CspanConfig tiny(Variant v) {
  CspanConfig c = small_config(v, 8, 2);
  c.num_classes = 2;
  return c;
}

}  // namespace

TEST(Train, StepsPerEpochFollowBatching) {
  const Corpus corpus = order_corpus(10, 4, 4);
  CspanModel m = make_model(tiny(Variant::kCascade), corpus, {}, 1);
  TrainConfig c;
  c.epochs = 1;
  c.batch_size = 4;
  const TrainResult r = train(m, corpus.train, corpus.test, c);
  EXPECT_EQ(r.optimizer_steps, 3u);
  ASSERT_EQ(r.records.size(), 2u);
  EXPECT_EQ(r.records[0].split, "train");
  EXPECT_EQ(r.records[1].split, "test");
  EXPECT_EQ(r.records[0].epoch, 1u);
}

TEST(Train, SameSeedIsBitIdentical) {
  const Corpus corpus = order_corpus(40, 10, 5);
  TrainConfig c;
  c.epochs = 3;
  c.batch_size = 8;
  c.record_wall_time = false;
  std::string runs[2];
  for (auto& out : runs) {
    CspanModel m = make_model(tiny(Variant::kCascade), corpus, {}, 9);
    train(m, corpus.train, corpus.test, c, [&](const MetricRecord& r) { out += r.to_json() + "\n"; });
  }
  EXPECT_EQ(runs[0], runs[1]);
  EXPECT_FALSE(runs[0].empty());
}

TEST(Train, LossDecreasesOnOrderTask) {
  const Corpus corpus = order_corpus(300, 50, 8);
  CspanModel m = make_model(tiny(Variant::kCascade), corpus, {}, 3);
  TrainConfig c;
  c.epochs = 10;
  c.batch_size = 32;
  const TrainResult r = train(m, corpus.train, {}, c);
  ASSERT_EQ(r.records.size(), 10u);
  EXPECT_LT(r.records.back().loss, r.records.front().loss);
}

TEST(Train, ParametersStayFloatRepresentable) {
  const Corpus corpus = order_corpus(20, 4, 4);
  CspanModel m = make_model(tiny(Variant::kParallel), corpus, {}, 2);
  TrainConfig c;
  c.epochs = 1;
  train(m, corpus.train, corpus.test, c);
  for (const auto& p : m.parameters())
    for (double v : p.value.data()) ASSERT_EQ(v, static_cast<double>(static_cast<float>(v))) << p.name;
}

TEST(Train, NonFiniteLossAbortsWithLocation) {
  const Corpus corpus = order_corpus(20, 4, 4);
  CspanModel m = make_model(tiny(Variant::kCascade), corpus, {}, 2);
  m.parameters().value("clf.b_o")[0] = std::nan("");
  TrainConfig c;
  c.epochs = 2;
  c.float_parameters = false;
  try {
    train(m, corpus.train, corpus.test, c);
    FAIL() << "expected TrainingDiverged";
  } catch (const TrainingDiverged& e) {
    EXPECT_EQ(e.epoch(), 1u);
    EXPECT_EQ(e.batch(), 0u);
  }
}

TEST(Evaluate, ThreadCountDoesNotChangeResult) {
  const Corpus corpus = order_corpus(10, 300, 6);
  CspanModel m = make_model(tiny(Variant::kCascade), corpus, {}, 4);
  const EvalResult a = evaluate(m, corpus.test, 16, 1);
  const EvalResult b = evaluate(m, corpus.test, 16, 4);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.accuracy, b.accuracy);
}

TEST(Evaluate, ConstantPredictorScoresClassShare) {
  std::vector<LabeledText> texts;
  for (std::size_t i = 0; i < 2000; ++i) texts.push_back({i % 4, "w" + std::to_string(i % 7)});
  const Corpus corpus = build_corpus(texts, texts);
  CspanConfig cfg = small_config(Variant::kEmbedding, 8, 2, 2, 4);
  CspanModel m = make_model(cfg, corpus, {}, 1);
  m.parameters().value("clf.W_o").fill(0.0);
  const EvalResult r = evaluate(m, corpus.test, 64, 1);
  EXPECT_NEAR(r.accuracy, 0.25, 0.05);
  EXPECT_NEAR(r.loss, std::log(4.0), 1e-12);
}

TEST(Ablation, SuiteShapes) {
  const CspanConfig base = tiny(Variant::kCascade);
  const auto fusion = ablation_rows(AblationSuite::kFusion, base);
  ASSERT_EQ(fusion.size(), 5u);
  EXPECT_EQ(fusion[0].second.variant, Variant::kEmbedding);
  EXPECT_EQ(fusion[4].second.variant, Variant::kCascade);
  const auto comp = ablation_rows(AblationSuite::kComponents, base);
  ASSERT_EQ(comp.size(), 4u);
  EXPECT_EQ(comp[0].second.variant, Variant::kBiLstmBaseline);
  EXPECT_FALSE(comp[1].second.residual);
  EXPECT_EQ(comp[1].second.queries, 1u);
  EXPECT_TRUE(comp[2].second.residual);
  EXPECT_EQ(comp[3].second.queries, base.queries);
  EXPECT_FALSE(parse_suite("nope").has_value());
}

TEST(Ablation, SingleSeedHasZeroSpreadAndCsvHeader) {
  const Corpus corpus = order_corpus(16, 8, 4);
  TrainConfig c;
  c.epochs = 1;
  c.batch_size = 8;
  const AblationReport rep = run_ablation(AblationSuite::kComponents, tiny(Variant::kCascade), corpus, {}, c, 1);
  ASSERT_EQ(rep.rows.size(), 4u);
  for (const auto& r : rep.rows) {
    EXPECT_EQ(r.stddev, 0.0);
    EXPECT_EQ(r.accuracies.size(), 1u);
  }
  const std::string csv = rep.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "variant,mean_acc,std_acc,params");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

TEST(Ablation, SeedsAreSharedAcrossRows) {
  const Corpus corpus = order_corpus(16, 8, 4);
  TrainConfig c;
  c.epochs = 1;
  c.batch_size = 8;
  const AblationReport a = run_ablation(AblationSuite::kFusion, tiny(Variant::kCascade), corpus, {}, c, 2);
  for (const auto& r : a.rows) {
    EXPECT_EQ(r.accuracies.size(), 2u);
    const double mean = (r.accuracies[0] + r.accuracies[1]) / 2;
    EXPECT_DOUBLE_EQ(r.mean, mean);
    EXPECT_NEAR(r.stddev, std::abs(r.accuracies[0] - r.accuracies[1]) / std::sqrt(2.0), 1e-12);
  }
}
