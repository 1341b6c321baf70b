// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cspan/data.hpp"
#include "cspan/error.hpp"
#include "cspan/model.hpp"
#include "cspan/tape.hpp"

namespace cspan {

struct TrainConfig {
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 64;
  std::size_t epochs = 30;
  /// 0-based epochs at which the rate is divided by 10.
  std::vector<std::size_t> lr_drop_epochs{20, 25};
  std::uint64_t seed = 1;
  /// AdamW-style decay instead of L2 folded into the gradient.
  bool decoupled_weight_decay = false;
  /// Keep parameters representable as float so checkpoints are lossless.
  bool float_parameters = true;
  /// wall_seconds is reported as 0 when false, making metrics byte-stable.
  bool record_wall_time = true;
  std::size_t eval_threads = 1;
  /// When false only the final epoch is evaluated (ablation sweeps).
  bool eval_every_epoch = true;

  void validate() const;
};

struct MetricRecord {
  std::size_t epoch = 0;  ///< 1-based
  std::string split;      ///< "train" or "test"
  double loss = 0.0;
  double accuracy = 0.0;
  double lr = 0.0;
  double wall_seconds = 0.0;

  /// One JSON object with exactly the keys epoch, split, loss, accuracy,
  /// lr, wall_seconds. Doubles use 17 significant digits.
  std::string to_json() const;
};

/// First and second moment accumulators, keyed by parameter name.
struct AdamState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  std::size_t step = 0;
};

/// One Adam update with bias correction at step t (1-based).
void adam_step(ParameterSet& params, const GradientMap& grads, AdamState& state, std::size_t t,
               double lr, const TrainConfig& config);

/// lr · 10^-(number of drop epochs <= epoch).
double lr_at(std::size_t epoch, const TrainConfig& config);

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Mean NLL and argmax accuracy over `docs`, unshuffled batches. With more
/// than one thread, batches are spread over workers and reduced in batch
/// order, so results do not depend on the thread count.
EvalResult evaluate(const CspanModel& model, const std::vector<Document>& docs,
                    std::size_t batch_size, std::size_t threads = 1);

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(std::size_t epoch, std::size_t batch, const std::string& detail)
      : Error("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
              std::to_string(batch) + ": " + detail),
        epoch_(epoch),
        batch_(batch) {}
  std::size_t epoch() const { return epoch_; }
  std::size_t batch() const { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

struct TrainResult {
  std::vector<MetricRecord> records;
  std::size_t optimizer_steps = 0;
};

using RecordSink = std::function<void(const MetricRecord&)>;

/// Per epoch: seeded shuffle, batches, forward, cross entropy, backward,
/// Adam; then evaluates both splits (train first). Single-threaded and
/// deterministic for a fixed seed. `test` may be empty.
TrainResult train(CspanModel& model, const std::vector<Document>& train_docs,
                  const std::vector<Document>& test_docs, const TrainConfig& config,
                  const RecordSink& sink = {});

// Corpus assembly ---------------------------------------------------------------

struct EmbeddingSource {
  /// Empty for random vectors.
  std::filesystem::path glove_path;
  /// Half-width of the uniform draw for random vectors.
  double random_range = kEmbeddingInitRange;
  bool trainable = true;
};

struct Corpus {
  Vocabulary vocab;
  std::vector<Document> train;
  std::vector<Document> test;
  std::size_t num_classes = 0;
};

/// Vocabulary from the training texts; labels must cover [0, num_classes).
Corpus build_corpus(const std::vector<LabeledText>& train, const std::vector<LabeledText>& test);

EmbeddingTable make_embeddings(const EmbeddingSource& source, const Vocabulary& vocab,
                               std::size_t dim, Rng& rng);

/// Builds a fresh model for `config` over `corpus`, seeded by `seed`.
CspanModel make_model(CspanConfig config, const Corpus& corpus, const EmbeddingSource& source,
                      std::uint64_t seed);

// Ablations ---------------------------------------------------------------------

enum class AblationSuite { kComponents, kFusion };

std::optional<AblationSuite> parse_suite(std::string_view name);

struct AblationRow {
  std::string name;
  CspanConfig config;
  std::vector<double> accuracies;  ///< final-epoch test accuracy per seed
  double mean = 0.0;
  double stddev = 0.0;             ///< sample std, 0 for one seed
  std::size_t params = 0;
};

struct AblationReport {
  std::vector<AblationRow> rows;
  /// Header: variant,mean_acc,std_acc,params
  std::string to_csv() const;
};

/// Row configurations of a suite derived from `base`.
std::vector<std::pair<std::string, CspanConfig>> ablation_rows(AblationSuite suite,
                                                               const CspanConfig& base);

/// Trains every row with the same seeds (seed_i = train.seed + i).
AblationReport run_ablation(AblationSuite suite, const CspanConfig& base, const Corpus& corpus,
                            const EmbeddingSource& embeddings, const TrainConfig& train_config,
                            std::size_t seeds, const std::function<void(const std::string&)>& log = {});

}  // namespace cspan
