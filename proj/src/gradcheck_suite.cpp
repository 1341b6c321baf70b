// SPDX-License-Identifier: Apache-2.0
#include "cspan/gradcheck_suite.hpp"

#include "cspan/attention.hpp"
#include "cspan/ops.hpp"
#include "cspan/recurrent.hpp"
#include "cspan/rng.hpp"

namespace cspan {

namespace {

using Inputs = std::vector<Var>;

Tensor draw(const Shape& shape, Rng& rng, double spread = 1.0) {
  return Tensor::uniform(shape, -spread, spread, rng);
}

// Weighted sum against fixed random coefficients, so invariances like
// sum(softmax) = 1 do not zero out the gradient.
class Projector {
 public:
  explicit Projector(Rng& rng) : rng_(rng) {}

  Var operator()(Var y) {
    if (slot_ == weights_.size()) weights_.push_back(draw(y.shape(), rng_));
    const Tensor& w = weights_[slot_++];
    if (w.shape() != y.shape()) throw ContractError("Projector: shape changed between calls");
    return sum(hadamard(y, y.tape().constant(w)));
  }
  void rewind() { slot_ = 0; }

 private:
  Rng& rng_;
  std::vector<Tensor> weights_;
  std::size_t slot_ = 0;
};

using Body = std::function<Var(const Inputs&, Projector&)>;

GradCheckCase simple(std::string op, std::vector<Shape> shapes, Body body) {
  return {op, [shapes = std::move(shapes), body = std::move(body)](std::uint64_t seed) {
            Rng rng(seed);
            std::vector<Tensor> inputs;
            for (const auto& s : shapes) inputs.push_back(draw(s, rng));
            Projector project(rng);
            return grad_check(
                [&](const Inputs& v) {
                  project.rewind();
                  return body(v, project);
                },
                std::move(inputs));
          }};
}

Var plus(Var a, Var b) { return add(a, b); }

LayerNormVars ln_of(const Inputs& v, std::size_t at) { return {v[at], v[at + 1]}; }

}  // namespace

GradCheckResult pipeline_gradcheck(Variant variant, std::uint64_t seed) {
  Rng rng(seed);
  CspanConfig config;
  config.vocab_size = 7;
  config.dim = 8;
  config.queries = 2;
  config.lstm_layers = 1;
  config.num_classes = 3;
  config.variant = variant;
  config.max_len = 5;
  config.relative_clip = 2;
  config.pooling = variant == Variant::kBiLstmBaseline ? Pooling::kMean : Pooling::kMultiQuery;

  EmbeddingTable emb{draw({config.vocab_size, config.dim}, rng, 0.5), true};
  for (std::size_t j = 0; j < config.dim; ++j) emb.weights.at(0, j) = 0.0;
  CspanModel model(config, std::move(emb), rng);

  std::vector<Document> docs(2);
  for (std::size_t b = 0; b < docs.size(); ++b) {
    const std::size_t len = b == 0 ? 5 : 3;
    for (std::size_t t = 0; t < len; ++t) docs[b].ids.push_back(2 + rng.below(config.vocab_size - 2));
    docs[b].label = rng.below(config.num_classes);
  }
  const DocumentBatch batch = DocumentBatch::from_documents({&docs[0], &docs[1]}, config.max_len);

  std::vector<std::pair<std::string, Tensor*>> targets;
  for (Parameter& p : model.parameters()) targets.emplace_back(p.name, &p.value);
  return grad_check_named(
      [&](Tape& tape) { return cross_entropy(model.forward(tape, batch).logits, batch.labels); },
      targets);
}

std::vector<GradCheckCase> builtin_gradcheck_cases() {
  std::vector<GradCheckCase> cases;
  cases.push_back(simple("matmul", {{3, 4}, {4, 5}, {5, 4}, {4, 3}},
                         [](const Inputs& v, Projector& p) {
                           return plus(plus(p(matmul(v[0], v[1])), p(matmul(v[0], v[2], false, true))),
                                       plus(p(matmul(v[3], v[1], true)),
                                            p(matmul(v[3], v[2], true, true))));
                         }));
  cases.push_back(simple("batched_matmul", {{2, 3, 4}, {2, 4, 5}, {2, 5, 4}},
                         [](const Inputs& v, Projector& p) {
                           return plus(p(batched_matmul(v[0], v[1])),
                                       p(batched_matmul(v[0], v[2], true)));
                         }));
  cases.push_back(simple("transpose_last2", {{2, 3, 4}, {3, 5}}, [](const Inputs& v, Projector& p) {
    return plus(p(transpose_last2(v[0])), p(transpose_last2(v[1])));
  }));
  cases.push_back(simple("softmax", {{2, 3, 4}, {3, 5}}, [](const Inputs& v, Projector& p) {
    const Mask mask = key_mask({4, 2}, 3, 4);
    return plus(p(row_softmax(scale(v[0], 3.0), mask)), p(row_softmax(v[1])));
  }));
  cases.push_back(simple("layer_norm", {{2, 3, 5}, {5}, {5}}, [](const Inputs& v, Projector& p) {
    return p(layer_norm(scale(v[0], 2.0), v[1], v[2]));
  }));
  cases.push_back(simple("tanh", {{3, 4}}, [](const Inputs& v, Projector& p) {
    return p(tanh(scale(v[0], 2.0)));
  }));
  cases.push_back(simple("sigmoid", {{3, 4}}, [](const Inputs& v, Projector& p) {
    return p(sigmoid(scale(v[0], 4.0)));
  }));
  cases.push_back(simple("add", {{3, 4}, {3, 4}}, [](const Inputs& v, Projector& p) {
    return p(add(v[0], v[1]));
  }));
  cases.push_back(simple("subtract", {{3, 4}, {3, 4}}, [](const Inputs& v, Projector& p) {
    return p(subtract(v[0], v[1]));
  }));
  cases.push_back(simple("scale", {{3, 4}}, [](const Inputs& v, Projector& p) {
    return p(scale(v[0], -1.7));
  }));
  cases.push_back(simple("hadamard", {{3, 4}, {3, 4}}, [](const Inputs& v, Projector& p) {
    return plus(p(hadamard(v[0], v[1])), p(hadamard(v[0], v[0])));
  }));
  cases.push_back(simple("add_broadcast", {{2, 3, 4}, {4}, {3, 4}}, [](const Inputs& v, Projector& p) {
    return plus(p(add_broadcast(v[0], v[1])), p(add_broadcast(v[0], v[2])));
  }));
  cases.push_back(simple("concat_columns", {{2, 3, 2}, {2, 3, 3}}, [](const Inputs& v, Projector& p) {
    return p(concat_columns(v[0], v[1]));
  }));
  cases.push_back(simple("slice_columns", {{2, 3, 6}}, [](const Inputs& v, Projector& p) {
    return plus(p(slice_columns(v[0], 1, 3)), p(slice_columns(v[0], 0, 2)));
  }));
  cases.push_back(simple("reshape", {{2, 3, 4}}, [](const Inputs& v, Projector& p) {
    return p(reshape(v[0], {6, 4}));
  }));
  cases.push_back(simple("sum", {{3, 4}}, [](const Inputs& v, Projector& p) {
    return p(sum(tanh(v[0])));
  }));
  cases.push_back(simple("mean", {{3, 4}}, [](const Inputs& v, Projector& p) {
    return p(mean(tanh(v[0])));
  }));
  cases.push_back(simple("gather_steps", {{3, 4, 2}}, [](const Inputs& v, Projector& p) {
    return p(gather_steps(v[0], {1, -1, 3}));
  }));
  cases.push_back(simple("scatter_steps", {{2, 3}, {2, 3}}, [](const Inputs& v, Projector& p) {
    return p(scatter_steps({v[0], v[1]}, {{0, 2}, {1, -1}}, 3));
  }));
  cases.push_back(simple("embedding_lookup", {{6, 3}}, [](const Inputs& v, Projector& p) {
    // position (1, 2) is padding; its output row is zero-weighted below
    const std::vector<std::size_t> ids = {1, 4, 4, 2, 5, 0};
    Var e = embedding_lookup(v[0], ids, 2, 3);
    Tensor keep({2, 3, 3}, 1.0);
    for (std::size_t j = 0; j < 3; ++j) keep.at(1, 2, j) = 0.0;
    return p(hadamard(e, v[0].tape().constant(std::move(keep))));
  }));
  cases.push_back(simple("relative_gather", {{2, 4, 5}}, [](const Inputs& v, Projector& p) {
    return p(relative_gather(v[0], 2));
  }));
  cases.push_back(simple("cross_entropy", {{4, 3}}, [](const Inputs& v, Projector&) {
    return cross_entropy(scale(v[0], 2.0), {0, 2, 1, 2});
  }));
  cases.push_back(simple("semantic_attention", {{2, 4, 6}, {6}, {6}}, [](const Inputs& v, Projector& p) {
    AttentionOutput a = semantic_self_attention(v[0], {4, 2}, ln_of(v, 1));
    return p(a.output);
  }));
  cases.push_back(simple("additive_pe_attention", {{2, 4, 6}, {6}, {6}},
                         [](const Inputs& v, Projector& p) {
                           AttentionOutput a =
                               additive_pe_attention(v[0], sinusoidal_pe(4, 6), {4, 3}, ln_of(v, 1));
                           return p(a.output);
                         }));
  cases.push_back(simple("relative_pe_attention", {{2, 4, 6}, {5, 6}, {6}, {6}},
                         [](const Inputs& v, Projector& p) {
                           AttentionOutput a = relative_pe_attention(v[0], v[1], 2, {4, 2}, ln_of(v, 2));
                           return p(a.output);
                         }));
  cases.push_back(simple("lstm_cell", {{2, 3}, {2, 4}, {2, 4}, {3, 16}, {4, 16}, {16}},
                         [](const Inputs& v, Projector& p) {
                           LstmState s = lstm_cell(v[0], {v[1], v[2]}, {v[3], v[4], v[5]});
                           return plus(p(s.h), p(s.c));
                         }));
  cases.push_back(simple("bilstm",
                         {{2, 4, 3}, {3, 8}, {2, 8}, {8}, {3, 8}, {2, 8}, {8},
                          {4, 8}, {2, 8}, {8}, {4, 8}, {2, 8}, {8}},
                         [](const Inputs& v, Projector& p) {
                           std::vector<BiLstmLayerVars> layers = {
                               {{v[1], v[2], v[3]}, {v[4], v[5], v[6]}},
                               {{v[7], v[8], v[9]}, {v[10], v[11], v[12]}}};
                           return p(bilstm(v[0], {4, 2}, layers));
                         }));
  cases.push_back(simple("multi_query_attention", {{2, 4, 6}, {2, 6}, {6, 6}, {6}, {12, 6}},
                         [](const Inputs& v, Projector& p) {
                           return p(multi_query_attention(v[0], {4, 3}, {v[1], v[2], v[3], v[4]}).features);
                         }));
  cases.push_back(simple("masked_mean", {{2, 4, 3}}, [](const Inputs& v, Projector& p) {
    return p(masked_mean(v[0], {4, 1}));
  }));
  for (Variant variant : {Variant::kEmbedding, Variant::kAdditivePosition, Variant::kRelativePosition,
                          Variant::kParallel, Variant::kCascade, Variant::kBiLstmBaseline}) {
    cases.push_back({"pipeline_" + std::string(variant_name(variant)),
                     [variant](std::uint64_t seed) { return pipeline_gradcheck(variant, seed); }});
  }
  return cases;
}

std::vector<GradCheckRow> run_gradcheck_suite(const std::vector<GradCheckCase>& cases,
                                              std::uint64_t first_seed, std::size_t seeds,
                                              double tolerance) {
  std::vector<GradCheckRow> rows;
  for (const auto& c : cases) {
    GradCheckRow row;
    row.op = c.op;
    row.passed = true;
    for (std::size_t s = 0; s < seeds; ++s) {
      try {
        const GradCheckResult r = c.run(first_seed + s);
        row.coordinates += r.coordinates;
        if (r.max_rel_error >= row.max_rel_error) {
          row.max_rel_error = r.max_rel_error;
          row.worst = r.worst_name + "[" + std::to_string(r.worst_index) + "] seed " +
                      std::to_string(first_seed + s);
        }
      } catch (const std::exception& e) {
        row.passed = false;
        row.worst = e.what();
        break;
      }
    }
    if (!(row.max_rel_error < tolerance)) row.passed = false;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace cspan
