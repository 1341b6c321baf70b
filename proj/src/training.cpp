// SPDX-License-Identifier: Apache-2.0
#include "cspan/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <json.hpp>
#include <mutex>
#include <thread>

#include "cspan/checkpoint.hpp"
#include "cspan/ops.hpp"
#include "cspan/rng.hpp"

namespace cspan {

void TrainConfig::validate() const {
  if (!(lr >= 0.0)) throw ContractError("lr must be >= 0");
  if (weight_decay < 0.0) throw ContractError("weight_decay must be >= 0");
  if (batch_size == 0) throw ContractError("batch_size must be >= 1");
  if (!std::is_sorted(lr_drop_epochs.begin(), lr_drop_epochs.end())) {
    throw ContractError("lr_drop_epochs must be ascending");
  }
  if (eval_threads == 0) throw ContractError("eval_threads must be >= 1");
}

std::string MetricRecord::to_json() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["split"] = split;
  j["loss"] = loss;
  j["accuracy"] = accuracy;
  j["lr"] = lr;
  j["wall_seconds"] = wall_seconds;
  return j.dump();
}

double lr_at(std::size_t epoch, const TrainConfig& config) {
  const auto drops = std::count_if(config.lr_drop_epochs.begin(), config.lr_drop_epochs.end(),
                                   [epoch](std::size_t e) { return e <= epoch; });
  return config.lr / std::pow(10.0, static_cast<double>(drops));
}

void adam_step(ParameterSet& params, const GradientMap& grads, AdamState& state, std::size_t t,
               double lr, const TrainConfig& config) {
  if (t == 0) throw ContractError("adam_step: step index starts at 1");
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
  for (Parameter& p : params) {
    if (!p.trainable) continue;
    Tensor& w = p.value;
    auto git = grads.find(p.name);
    const Tensor* g = git == grads.end() ? nullptr : &git->second;
    if (g && g->shape() != w.shape()) {
      throw ContractError("adam_step: gradient of '" + p.name + "' is " + shape_str(g->shape()) +
                          ", parameter is " + shape_str(w.shape()));
    }
    auto [mit, fresh_m] = state.m.try_emplace(p.name, w.shape());
    auto [vit, fresh_v] = state.v.try_emplace(p.name, w.shape());
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    if (m.shape() != w.shape() || v.shape() != w.shape()) {
      throw ContractError("adam_step: optimizer state of '" + p.name + "' does not match");
    }
    const std::size_t skip = p.pad_row_frozen ? w.cols() : 0;
    const bool coupled = p.decay && !config.decoupled_weight_decay && config.weight_decay != 0.0;
    const bool decoupled = p.decay && config.decoupled_weight_decay && config.weight_decay != 0.0;
    for (std::size_t i = skip; i < w.size(); ++i) {
      double gi = g ? (*g)[i] : 0.0;
      if (coupled) gi += config.weight_decay * w[i];
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * gi;
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + config.adam_eps);
      if (decoupled) w[i] -= lr * config.weight_decay * w[i];
    }
  }
  state.step = t;
}

namespace {

struct BatchScore {
  double loss_sum = 0.0;
  std::size_t correct = 0;
};

BatchScore score_batch(const CspanModel& model, const DocumentBatch& batch) {
  const Tensor logits = model.logits(batch);
  BatchScore s;
  for (std::size_t b = 0; b < batch.batch; ++b) {
    auto row = logits.row(b);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    s.loss_sum += mx + std::log(z) - row[batch.labels[b]];
    if (argmax_row(row) == batch.labels[b]) ++s.correct;
  }
  return s;
}

std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) {
  std::uint64_t state = seed * 0x9E3779B97F4A7C15ULL + epoch;
  return splitmix64(state);
}

}  // namespace

EvalResult evaluate(const CspanModel& model, const std::vector<Document>& docs,
                    std::size_t batch_size, std::size_t threads) {
  if (docs.empty()) throw ContractError("evaluate: empty corpus");
  const auto batches = make_batches(docs, batch_size, model.config().max_len, std::nullopt);
  std::vector<BatchScore> scores(batches.size());
  threads = std::max<std::size_t>(1, std::min(threads, batches.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < batches.size(); ++i) scores[i] = score_batch(model, batches[i]);
  } else {
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex failure_mutex;
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < batches.size(); i += threads) {
            scores[i] = score_batch(model, batches[i]);
          }
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }
  double loss = 0.0;
  std::size_t correct = 0;
  for (const auto& s : scores) {
    loss += s.loss_sum;
    correct += s.correct;
  }
  const double n = static_cast<double>(docs.size());
  return {loss / n, static_cast<double>(correct) / n};
}

TrainResult train(CspanModel& model, const std::vector<Document>& train_docs,
                  const std::vector<Document>& test_docs, const TrainConfig& config,
                  const RecordSink& sink) {
  config.validate();
  if (train_docs.empty()) throw ContractError("train: empty training corpus");
  if (config.float_parameters) round_to_float(model.parameters());

  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    if (!config.record_wall_time) return 0.0;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  TrainResult result;
  AdamState adam;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at(epoch, config);
    const auto batches = make_batches(train_docs, config.batch_size, model.config().max_len,
                                      epoch_seed(config.seed, epoch));
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      GradientMap grads;
      try {
        Tape tape;
        Var logits = model.forward(tape, batches[bi]).logits;
        Var loss = cross_entropy(logits, batches[bi].labels);
        if (!std::isfinite(loss.value()[0])) throw NumericFault("cross_entropy", 0);
        tape.backward(loss);
        grads = tape.parameter_gradients();
      } catch (const NumericFault& e) {
        throw TrainingDiverged(epoch + 1, bi, e.what());
      }
      adam_step(model.parameters(), grads, adam, ++result.optimizer_steps, lr, config);
      if (config.float_parameters) round_to_float(model.parameters());
    }

    if (!config.eval_every_epoch && epoch + 1 != config.epochs) continue;
    auto emit = [&](const char* split, const std::vector<Document>& docs) {
      const EvalResult r = evaluate(model, docs, config.batch_size, config.eval_threads);
      MetricRecord rec{epoch + 1, split, r.loss, r.accuracy, lr, elapsed()};
      result.records.push_back(rec);
      if (sink) sink(rec);
    };
    emit("train", train_docs);
    if (!test_docs.empty()) emit("test", test_docs);
  }
  return result;
}

// Corpus ------------------------------------------------------------------------

Corpus build_corpus(const std::vector<LabeledText>& train, const std::vector<LabeledText>& test) {
  if (train.empty()) throw ContractError("build_corpus: empty training set");
  std::vector<std::vector<std::string>> tokens;
  tokens.reserve(train.size());
  for (const auto& d : train) tokens.push_back(tokenize(d.text));
  Corpus c;
  c.vocab = Vocabulary::build(tokens);
  c.train = encode(train, c.vocab);
  c.test = encode(test, c.vocab);
  for (const auto* docs : {&c.train, &c.test})
    for (const auto& d : *docs) c.num_classes = std::max(c.num_classes, d.label + 1);
  return c;
}

EmbeddingTable make_embeddings(const EmbeddingSource& source, const Vocabulary& vocab,
                               std::size_t dim, Rng& rng) {
  EmbeddingTable e = source.glove_path.empty() ? random_embeddings(vocab.size(), dim, rng, source.random_range)
                                               : load_glove(source.glove_path, vocab, dim, rng);
  e.trainable = source.trainable;
  return e;
}

CspanModel make_model(CspanConfig config, const Corpus& corpus, const EmbeddingSource& source,
                      std::uint64_t seed) {
  config.vocab_size = corpus.vocab.size();
  config.num_classes = corpus.num_classes;
  Rng rng(seed);
  EmbeddingTable emb = make_embeddings(source, corpus.vocab, config.dim, rng);
  return CspanModel(config, std::move(emb), rng);
}

}  // namespace cspan
