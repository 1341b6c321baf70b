// SPDX-License-Identifier: Apache-2.0
#include "cspan/model.hpp"

#include <algorithm>
#include <cmath>

#include "cspan/error.hpp"
#include "cspan/ops.hpp"
#include "cspan/rng.hpp"

namespace cspan {

// ParameterSet ----------------------------------------------------------------

Parameter& ParameterSet::add(Parameter p) {
  if (contains(p.name)) throw ContractError("duplicate parameter '" + p.name + "'");
  index_.emplace(p.name, params_.size());
  params_.push_back(std::move(p));
  return params_.back();
}

Parameter& ParameterSet::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
  return params_[it->second];
}

const Parameter& ParameterSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
  return params_[it->second];
}

std::size_t ParameterSet::total_elements() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

// Config ----------------------------------------------------------------------

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::kEmbedding: return "a";
    case Variant::kAdditivePosition: return "b";
    case Variant::kRelativePosition: return "c";
    case Variant::kParallel: return "d";
    case Variant::kCascade: return "e";
    case Variant::kBiLstmBaseline: return "lstm";
  }
  return "?";
}

std::optional<Variant> parse_variant(std::string_view s) {
  for (Variant v : {Variant::kEmbedding, Variant::kAdditivePosition, Variant::kRelativePosition,
                    Variant::kParallel, Variant::kCascade, Variant::kBiLstmBaseline}) {
    if (variant_name(v) == s) return v;
  }
  return std::nullopt;
}

CspanConfig CspanConfig::base() {
  CspanConfig c;
  c.queries = 16;
  c.lstm_layers = 1;
  return c;
}

CspanConfig CspanConfig::big() {
  CspanConfig c;
  c.queries = 128;
  c.lstm_layers = 3;
  return c;
}

bool CspanConfig::uses_lstm() const {
  return variant == Variant::kParallel || variant == Variant::kCascade ||
         variant == Variant::kBiLstmBaseline;
}

bool CspanConfig::uses_semantic_attention() const { return variant != Variant::kBiLstmBaseline; }

void CspanConfig::validate() const {
  if (dim < 2 || dim % 2 != 0) throw ContractError("dim must be even and >= 2");
  if (pooling == Pooling::kMultiQuery && queries < 1) throw ContractError("queries must be >= 1");
  if (uses_lstm() && lstm_layers < 1) throw ContractError("lstm_layers must be >= 1");
  if (num_classes < 1) throw ContractError("num_classes must be >= 1");
  if (vocab_size < 2) throw ContractError("vocab_size must cover PAD and UNK");
  if (max_len < 1) throw ContractError("max_len must be >= 1");
}

ParamCount param_count(const CspanConfig& c) {
  const std::size_t d = c.dim, m = c.queries, h = d / 2;
  ParamCount out;
  out.multi_query = m * d + d * d + d + m * d * d;
  out.multi_head_equiv = m * 3 * d * d + d * d;

  std::size_t total = c.vocab_size * d;
  const std::size_t norm = c.layer_norm_affine ? 2 * d : 0;
  if (c.uses_semantic_attention()) total += norm;
  if (c.variant == Variant::kRelativePosition) total += (2 * c.relative_clip + 1) * d;
  if (c.uses_lstm()) {
    const std::size_t per_direction = d * 4 * h + h * 4 * h + 4 * h;
    total += c.lstm_layers * 2 * per_direction;
  }
  if (c.variant == Variant::kParallel || c.variant == Variant::kCascade) total += norm;
  if (c.pooling == Pooling::kMultiQuery) total += out.multi_query;
  total += d * c.num_classes + c.num_classes;
  out.total = total;
  return out;
}

// Blocks ----------------------------------------------------------------------

Var residual_fuse(Var s, Var p) { return add(s, p); }

PooledOutput multi_query_attention(Var f, const std::vector<std::size_t>& lengths,
                                   const MultiQueryVars& p) {
  const Tensor& fv = f.value();
  if (fv.rank() != 3 || lengths.size() != fv.dim(0)) {
    throw ShapeError("multi_query_attention: expected [B, L, d] with B lengths, got " +
                     shape_str(fv.shape()));
  }
  const std::size_t batch = fv.dim(0), len = fv.dim(1), d = fv.dim(2);
  const std::size_t m = p.q.value().dim(0);
  if (p.q.value().shape() != Shape{m, d} || p.w_f.value().shape() != Shape{m * d, d}) {
    throw ShapeError("multi_query_attention: Q " + shape_str(p.q.value().shape()) + ", W_f " +
                     shape_str(p.w_f.value().shape()) + " for width " + std::to_string(d));
  }
  for (std::size_t l : lengths) {
    if (l == 0) throw DegenerateRowError("multi_query_attention: document with no valid token");
  }
  Var flat = reshape(f, {batch * len, d});
  Var u = tanh(add_broadcast(matmul(flat, p.w_h), p.b_h));
  Var scores = transpose_last2(reshape(matmul(u, p.q, false, true), {batch, len, m}));
  Var alpha = row_softmax(scores, key_mask(lengths, m, len));
  Var pooled = reshape(batched_matmul(alpha, f), {batch, m * d});
  return {matmul(pooled, p.w_f), alpha};
}

Var masked_mean(Var x, const std::vector<std::size_t>& lengths) {
  const Tensor& xv = x.value();
  const std::size_t batch = xv.dim(0), len = xv.dim(1), d = xv.dim(2);
  Tensor w({batch, 1, len});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < lengths[b]; ++t) w.at(b, 0, t) = 1.0 / static_cast<double>(lengths[b]);
  }
  return reshape(batched_matmul(x.tape().constant(std::move(w)), x), {batch, d});
}

// Model -----------------------------------------------------------------------

CspanModel::CspanModel(CspanConfig config, EmbeddingTable embeddings, Rng& rng)
    : config_(std::move(config)) {
  config_.validate();
  const std::size_t d = config_.dim, h = d / 2, m = config_.queries;
  if (embeddings.weights.shape() != Shape{config_.vocab_size, d}) {
    throw ShapeError("embedding table " + shape_str(embeddings.weights.shape()) +
                     " does not match vocab " + std::to_string(config_.vocab_size) + " x dim " +
                     std::to_string(d));
  }
  const double k = 1.0 / std::sqrt(static_cast<double>(d));
  auto add_norm = [&](const std::string& prefix) {
    if (!config_.layer_norm_affine) return;
    params_.add({prefix + ".gamma", Tensor({d}, 1.0), false});
    params_.add({prefix + ".beta", Tensor({d}), false});
  };

  params_.add({"emb.table", std::move(embeddings.weights), true, true, embeddings.trainable});
  if (config_.uses_semantic_attention()) add_norm("sem.ln");
  if (config_.variant == Variant::kRelativePosition) {
    params_.add({"rel.R", Tensor::uniform({2 * config_.relative_clip + 1, d}, -k, k, rng)});
  }
  if (config_.uses_lstm()) {
    for (std::size_t l = 0; l < config_.lstm_layers; ++l) {
      for (const char* dir : {"fwd", "bwd"}) {
        LstmParams p = init_lstm(d, h, rng);
        const std::string prefix = std::string("lstm.") + dir + "." + std::to_string(l) + ".";
        params_.add({prefix + "W_x", std::move(p.w_x)});
        params_.add({prefix + "W_h", std::move(p.w_h)});
        params_.add({prefix + "b", std::move(p.b), false});
      }
    }
  }
  if (config_.variant == Variant::kParallel || config_.variant == Variant::kCascade) add_norm("pos.ln");
  if (config_.pooling == Pooling::kMultiQuery) {
    params_.add({"mq.Q", Tensor::uniform({m, d}, -k, k, rng)});
    params_.add({"mq.W_h", Tensor::uniform({d, d}, -k, k, rng)});
    params_.add({"mq.b_h", Tensor({d}), false});
    params_.add({"mq.W_f", Tensor::uniform({m * d, d}, -k, k, rng)});
  }
  params_.add({"clf.W_o", Tensor::uniform({d, config_.num_classes}, -k, k, rng)});
  params_.add({"clf.b_o", Tensor({config_.num_classes}), false});
}

Var CspanModel::param(Tape& tape, const std::string& name) const {
  const Parameter& p = params_.at(name);
  return tape.parameter(name, p.value, p.trainable);
}

LayerNormVars CspanModel::norm(Tape& tape, const std::string& prefix) const {
  if (config_.layer_norm_affine) return {param(tape, prefix + ".gamma"), param(tape, prefix + ".beta")};
  return {tape.constant(Tensor({config_.dim}, 1.0)), tape.constant(Tensor({config_.dim}))};
}

std::vector<BiLstmLayerVars> CspanModel::lstm_layers(Tape& tape) const {
  std::vector<BiLstmLayerVars> layers;
  for (std::size_t l = 0; l < config_.lstm_layers; ++l) {
    auto dir = [&](const char* name) {
      const std::string prefix = std::string("lstm.") + name + "." + std::to_string(l) + ".";
      return LstmVars{param(tape, prefix + "W_x"), param(tape, prefix + "W_h"), param(tape, prefix + "b")};
    };
    layers.push_back({dir("fwd"), dir("bwd")});
  }
  return layers;
}

Var CspanModel::positional_block(Tape& tape, Var s, const std::vector<std::size_t>& lengths) const {
  Var h = bilstm(s, lengths, lstm_layers(tape));
  return semantic_self_attention(h, lengths, norm(tape, "pos.ln")).output;
}

ForwardResult CspanModel::forward(Tape& tape, const DocumentBatch& batch) const {
  const std::size_t d = config_.dim;
  for (std::size_t label : batch.labels) {
    if (label >= config_.num_classes) {
      throw ContractError("label " + std::to_string(label) + " outside [0, " +
                          std::to_string(config_.num_classes) + ")");
    }
  }
  const auto& lengths = batch.lengths;
  Var emb = embedding_lookup(param(tape, "emb.table"), batch.ids, batch.batch, batch.max_len,
                             Vocabulary::kPad);

  ForwardResult r;
  switch (config_.variant) {
    case Variant::kEmbedding: {
      AttentionOutput a = semantic_self_attention(emb, lengths, norm(tape, "sem.ln"));
      r.token_features = a.output;
      r.attention_weights = a.weights;
      break;
    }
    case Variant::kAdditivePosition: {
      AttentionOutput a =
          additive_pe_attention(emb, sinusoidal_pe(batch.max_len, d), lengths, norm(tape, "sem.ln"));
      r.token_features = a.output;
      r.attention_weights = a.weights;
      break;
    }
    case Variant::kRelativePosition: {
      AttentionOutput a = relative_pe_attention(emb, param(tape, "rel.R"), config_.relative_clip,
                                                lengths, norm(tape, "sem.ln"));
      r.token_features = a.output;
      r.attention_weights = a.weights;
      break;
    }
    case Variant::kParallel:
    case Variant::kCascade: {
      AttentionOutput a = semantic_self_attention(emb, lengths, norm(tape, "sem.ln"));
      Var source = config_.variant == Variant::kCascade ? a.output : emb;
      Var p = positional_block(tape, source, lengths);
      r.token_features = config_.residual ? residual_fuse(a.output, p) : p;
      r.attention_weights = a.weights;
      break;
    }
    case Variant::kBiLstmBaseline:
      r.token_features = bilstm(emb, lengths, lstm_layers(tape));
      break;
  }

  if (config_.pooling == Pooling::kMultiQuery) {
    MultiQueryVars mq{param(tape, "mq.Q"), param(tape, "mq.W_h"), param(tape, "mq.b_h"),
                      param(tape, "mq.W_f")};
    r.features = multi_query_attention(r.token_features, lengths, mq).features;
  } else {
    r.features = masked_mean(r.token_features, lengths);
  }
  r.logits = add_broadcast(matmul(r.features, param(tape, "clf.W_o")), param(tape, "clf.b_o"));
  return r;
}

Tensor CspanModel::logits(const DocumentBatch& batch) const {
  Tape tape;
  return forward(tape, batch).logits.value();
}

Tensor class_probabilities(const Tensor& logits) { return softmax_rows(logits); }

std::size_t argmax_row(std::span<const double> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace cspan
