// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cspan/attention.hpp"
#include "cspan/data.hpp"
#include "cspan/parameters.hpp"
#include "cspan/recurrent.hpp"
#include "cspan/tape.hpp"

namespace cspan {

class Rng;

/// How semantic and positional information are combined.
enum class Variant {
  kEmbedding,         ///< (a) semantic attention only
  kAdditivePosition,  ///< (b) attention over word + sinusoidal vectors
  kRelativePosition,  ///< (c) attention with clipped relative offsets
  kParallel,          ///< (d) attention and Bi-LSTM both on embeddings, summed
  kCascade,           ///< (e) Bi-LSTM over the attention output, summed
  kBiLstmBaseline,    ///< plain Bi-LSTM, used by the component ablation
};

/// Letter a..e for the five fusion variants, "lstm" for the baseline.
std::string_view variant_name(Variant v);
/// Accepts a..e (and "lstm"); nullopt otherwise.
std::optional<Variant> parse_variant(std::string_view s);

enum class Pooling { kMultiQuery, kMean };

struct CspanConfig {
  std::size_t vocab_size = 2;
  std::size_t dim = 300;
  std::size_t queries = 16;
  std::size_t lstm_layers = 1;
  std::size_t num_classes = 4;
  Variant variant = Variant::kCascade;
  std::size_t max_len = 256;
  std::size_t relative_clip = kDefaultRelativeClip;
  /// Sum the semantic path into the positional one (variants d, e).
  bool residual = true;
  Pooling pooling = Pooling::kMultiQuery;
  bool layer_norm_affine = true;

  static CspanConfig base();  // 1 Bi-LSTM layer, 16 queries
  static CspanConfig big();   // 3 Bi-LSTM layers, 128 queries

  bool uses_lstm() const;
  bool uses_semantic_attention() const;
  /// Throws ContractError on an inconsistent configuration.
  void validate() const;
};

struct ParamCount {
  std::size_t multi_query = 0;       ///< Q, W^h, b^h, W^f
  std::size_t multi_head_equiv = 0;  ///< m heads with full d×d Q/K/V maps, plus a d×d output
  std::size_t total = 0;             ///< every parameter of the instantiated model
};

/// Closed-form counts for a configuration.
ParamCount param_count(const CspanConfig& config);

/// Tape view of the pooling parameters.
struct MultiQueryVars {
  Var q;    ///< [m, d]
  Var w_h;  ///< [d, d]
  Var b_h;  ///< [d]
  Var w_f;  ///< [m·d, d]
};

struct PooledOutput {
  Var features;  ///< [B, d]
  Var weights;   ///< [B, m, L]
};

/// u_t = tanh(F_t W^h + b^h); per query i a masked softmax over t of
/// u_tᵀ Q_i pools F into F_i; the m pooled rows are concatenated in query
/// order and mapped back to d by W^f.
PooledOutput multi_query_attention(Var f, const std::vector<std::size_t>& lengths,
                                   const MultiQueryVars& p);

/// Mean of the valid rows of a [B, L, d] stack.
Var masked_mean(Var x, const std::vector<std::size_t>& lengths);

/// Elementwise S + P.
Var residual_fuse(Var s, Var p);

struct ForwardResult {
  Var logits;             ///< [B, |Y|]
  Var features;           ///< [B, d] document vectors
  Var token_features;     ///< [B, L, d] input to pooling
  Var attention_weights;  ///< [B, L, L] first attention block (invalid for the baseline)
};

/// End-to-end classifier with named parameters.
///
/// Names: emb.table, sem.ln.{gamma,beta}, rel.R, lstm.{fwd,bwd}.<layer>.
/// {W_x,W_h,b}, pos.ln.{gamma,beta}, mq.{Q,W_h,b_h,W_f}, clf.{W_o,b_o}.
class CspanModel {
 public:
  /// Initializes every parameter except the embeddings from `rng`.
  CspanModel(CspanConfig config, EmbeddingTable embeddings, Rng& rng);

  const CspanConfig& config() const { return config_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }

  ForwardResult forward(Tape& tape, const DocumentBatch& batch) const;

  /// Positional block on a [B, L, d] stack: Bi-LSTM, then projection-free
  /// self-attention with its own layer norm.
  Var positional_block(Tape& tape, Var s, const std::vector<std::size_t>& lengths) const;

  /// Convenience inference: logits as a plain tensor.
  Tensor logits(const DocumentBatch& batch) const;

 private:
  Var param(Tape& tape, const std::string& name) const;
  LayerNormVars norm(Tape& tape, const std::string& prefix) const;
  std::vector<BiLstmLayerVars> lstm_layers(Tape& tape) const;

  CspanConfig config_;
  ParameterSet params_;
};

/// softmax(f W^o + b^o); argmax with lowest-index tie-break.
Tensor class_probabilities(const Tensor& logits);
std::size_t argmax_row(std::span<const double> row);

}  // namespace cspan
