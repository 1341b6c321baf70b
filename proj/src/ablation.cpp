// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstdio>
#include <numeric>

#include "cspan/training.hpp"

namespace cspan {

std::optional<AblationSuite> parse_suite(std::string_view name) {
  if (name == "components") return AblationSuite::kComponents;
  if (name == "fusion") return AblationSuite::kFusion;
  return std::nullopt;
}

std::vector<std::pair<std::string, CspanConfig>> ablation_rows(AblationSuite suite,
                                                               const CspanConfig& base) {
  std::vector<std::pair<std::string, CspanConfig>> rows;
  if (suite == AblationSuite::kComponents) {
    CspanConfig c = base;
    c.variant = Variant::kBiLstmBaseline;
    c.pooling = Pooling::kMean;
    rows.emplace_back("baseline", c);

    // single-query pooling stands in for "no multi-query"
    c = base;
    c.variant = Variant::kCascade;
    c.pooling = Pooling::kMultiQuery;
    c.residual = false;
    c.queries = 1;
    rows.emplace_back("+self-att", c);

    c.residual = true;
    rows.emplace_back("+residual", c);

    c.queries = base.queries;
    rows.emplace_back("+multi-query", c);
    return rows;
  }
  const std::pair<Variant, const char*> fusion[] = {
      {Variant::kEmbedding, "(a) Embedding"},
      {Variant::kAdditivePosition, "(b) Embedding+Position"},
      {Variant::kRelativePosition, "(c) Embedding+Relative-Position"},
      {Variant::kParallel, "(d) Embedding+Bi-LSTM"},
      {Variant::kCascade, "(e) Embedding//Bi-LSTM"},
  };
  for (const auto& [v, name] : fusion) {
    CspanConfig c = base;
    c.variant = v;
    c.residual = true;
    c.pooling = Pooling::kMultiQuery;
    rows.emplace_back(name, c);
  }
  return rows;
}

std::string AblationReport::to_csv() const {
  std::string out = "variant,mean_acc,std_acc,params\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), ",%.6f,%.6f,%zu\n", r.mean, r.stddev, r.params);
    out += r.name + buf;
  }
  return out;
}

AblationReport run_ablation(AblationSuite suite, const CspanConfig& base, const Corpus& corpus,
                            const EmbeddingSource& embeddings, const TrainConfig& train_config,
                            std::size_t seeds, const std::function<void(const std::string&)>& log) {
  if (seeds == 0) throw ContractError("run_ablation: need at least one seed");
  AblationReport report;
  for (auto& [name, config] : ablation_rows(suite, base)) {
    AblationRow row;
    row.name = name;
    row.config = config;
    for (std::size_t s = 0; s < seeds; ++s) {
      TrainConfig tc = train_config;
      tc.seed = train_config.seed + s;
      CspanModel model = make_model(config, corpus, embeddings, tc.seed);
      row.params = model.parameters().total_elements();
      const TrainResult r = train(model, corpus.train, corpus.test, tc);
      const MetricRecord& last = r.records.back();
      row.accuracies.push_back(last.accuracy);
      if (log) {
        log(name + " seed " + std::to_string(tc.seed) + ": " + last.split + " accuracy " +
            std::to_string(last.accuracy));
      }
    }
    const double n = static_cast<double>(row.accuracies.size());
    row.mean = std::accumulate(row.accuracies.begin(), row.accuracies.end(), 0.0) / n;
    if (row.accuracies.size() > 1) {
      double ss = 0.0;
      for (double a : row.accuracies) ss += (a - row.mean) * (a - row.mean);
      row.stddev = std::sqrt(ss / (n - 1.0));
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace cspan
