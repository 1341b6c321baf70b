// SPDX-License-Identifier: Apache-2.0
#include "cspan/cli.hpp"

#include <CLI11.hpp>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <map>
#include <ostream>
#include <sstream>

#include "cspan/checkpoint.hpp"
#include "cspan/data.hpp"
#include "cspan/rng.hpp"

namespace cspan::cli {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.push_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string fmt_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void apply(RunConfig& c, const std::string& key, const std::string& v) {
  if (key == "variant") {
    auto parsed = parse_variant(v);
    if (!parsed) throw ConfigError("variant: expected one of a, b, c, d, e, lstm; got '" + v + "'");
    c.model.variant = *parsed;
  } else if (key == "dim") c.model.dim = to_size(key, v);
  else if (key == "queries") c.model.queries = to_size(key, v);
  else if (key == "lstm-layers") c.model.lstm_layers = to_size(key, v);
  else if (key == "max-len") c.model.max_len = to_size(key, v);
  else if (key == "relative-clip") c.model.relative_clip = to_size(key, v);
  else if (key == "residual") c.model.residual = to_bool(key, v);
  else if (key == "layer-norm-affine") c.model.layer_norm_affine = to_bool(key, v);
  else if (key == "pooling") {
    if (v == "multi-query") c.model.pooling = Pooling::kMultiQuery;
    else if (v == "mean") c.model.pooling = Pooling::kMean;
    else throw ConfigError("pooling: expected multi-query or mean, got '" + v + "'");
  } else if (key == "vocab-size") c.model.vocab_size = to_size(key, v);
  else if (key == "num-classes") c.model.num_classes = to_size(key, v);
  else if (key == "epochs") c.train.epochs = to_size(key, v);
  else if (key == "lr") c.train.lr = to_double(key, v);
  else if (key == "lr-drops") {
    c.train.lr_drop_epochs.clear();
    if (!v.empty())
      for (const auto& p : split(v, ',')) c.train.lr_drop_epochs.push_back(to_size(key, p));
  } else if (key == "weight-decay") c.train.weight_decay = to_double(key, v);
  else if (key == "decoupled-weight-decay") c.train.decoupled_weight_decay = to_bool(key, v);
  else if (key == "batch-size") c.train.batch_size = to_size(key, v);
  else if (key == "seed") c.train.seed = to_size(key, v);
  else if (key == "eval-threads") c.train.eval_threads = to_size(key, v);
  else if (key == "wall-clock") c.train.record_wall_time = to_bool(key, v);
  else if (key == "float-parameters") c.train.float_parameters = to_bool(key, v);
  else if (key == "embeddings") {
    if (v.rfind("random:", 0) == 0) {
      if (!(to_double(key, v.substr(7)) >= 0.0)) throw ConfigError("embeddings: negative range");
    } else if (v != "random" && v.rfind("glove:", 0) != 0) {
      throw ConfigError("embeddings: expected random, random:RANGE or glove:PATH, got '" + v + "'");
    }
    c.embeddings = v;
  } else if (key == "trainable-embeddings") c.trainable_embeddings = to_bool(key, v);
  else if (key == "train") c.train_path = v;
  else if (key == "test") c.test_path = v;
  else if (key == "out") c.out = v;
  else if (key == "suite") {
    if (!parse_suite(v)) throw ConfigError("suite: expected components or fusion, got '" + v + "'");
    c.suite = v;
  } else if (key == "seeds") c.seeds = to_size(key, v);
  else if (key == "ops") c.ops = v;
  else if (key == "checkpoint") c.checkpoint = v;
  else if (key == "text") c.text = v;
  else throw ConfigError("unknown key '" + key + "'");
}

void apply_preset(RunConfig& c, const std::string& v) {
  CspanConfig p;
  if (v == "base") p = CspanConfig::base();
  else if (v == "big") p = CspanConfig::big();
  else throw ConfigError("preset: expected base or big, got '" + v + "'");
  c.model.queries = p.queries;
  c.model.lstm_layers = p.lstm_layers;
}

bool is_known(const std::string& key) {
  const auto& keys = known_keys();
  return key == "preset" || std::find(keys.begin(), keys.end(), key) != keys.end();
}

std::string pooling_name(Pooling p) { return p == Pooling::kMean ? "mean" : "multi-query"; }

std::string bool_name(bool b) { return b ? "true" : "false"; }

EmbeddingSource embedding_source(const RunConfig& c) {
  EmbeddingSource s;
  if (c.embeddings.rfind("glove:", 0) == 0) s.glove_path = c.embeddings.substr(6);
  if (c.embeddings.rfind("random:", 0) == 0) s.random_range = to_double("embeddings", c.embeddings.substr(7));
  s.trainable = c.trainable_embeddings;
  return s;
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << content;
  if (!f) throw IoError("write failed for " + path.string());
}

fs::path prepare_out(const RunConfig& c) {
  std::error_code ec;
  fs::create_directories(c.out, ec);
  if (ec || !fs::is_directory(c.out)) throw IoError("cannot create output directory " + c.out);
  return c.out;
}

// Model restored from a checkpoint; vocab.txt sits next to it.
struct Restored {
  Vocabulary vocab;
  CspanModel model;
};

Restored restore(RunConfig& c) {
  if (c.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  const fs::path ckpt = c.checkpoint;
  if (!fs::is_regular_file(ckpt)) throw IoError("checkpoint not found: " + c.checkpoint);
  Vocabulary vocab = Vocabulary::load(ckpt.parent_path() / "vocab.txt");
  c.model.vocab_size = vocab.size();
  c.model.validate();
  EmbeddingTable placeholder{Tensor({vocab.size(), c.model.dim}), c.trainable_embeddings};
  Rng rng(c.train.seed);
  CspanModel model(c.model, std::move(placeholder), rng);
  load_checkpoint(ckpt, model.parameters());
  return {std::move(vocab), std::move(model)};
}

int cmd_train(RunConfig& c, std::ostream& out, std::ostream& err) {
  if (c.train_path.empty()) throw ConfigError("--train is required");
  const auto train_texts = load_split(c.train_path, c.train.seed, false);
  const auto test_texts =
      c.test_path.empty() ? std::vector<LabeledText>{} : load_split(c.test_path, c.train.seed, true);
  const Corpus corpus = build_corpus(train_texts, test_texts);
  c.model.vocab_size = corpus.vocab.size();
  c.model.num_classes = corpus.num_classes;
  c.model.validate();
  c.train.validate();
  const fs::path dir = prepare_out(c);

  CspanModel model = make_model(c.model, corpus, embedding_source(c), c.train.seed);
  const std::string resolved = render(c);
  out << resolved << std::flush;
  write_text(dir / "config.txt", resolved);
  corpus.vocab.save(dir / "vocab.txt");

  std::ofstream metrics(dir / "metrics.jsonl", std::ios::binary);
  if (!metrics) throw IoError("cannot write " + (dir / "metrics.jsonl").string());
  try {
    train(model, corpus.train, corpus.test, c.train, [&](const MetricRecord& r) {
      metrics << r.to_json() << '\n' << std::flush;
      err << "epoch " << r.epoch << " " << r.split << " loss " << r.loss << " accuracy "
          << r.accuracy << '\n';
    });
  } catch (const TrainingDiverged& e) {
    err << "error: " << e.what() << '\n';
    return kNumeric;
  }
  save_checkpoint(dir / "model.ckpt", model.parameters());
  out << "checkpoint: " << (dir / "model.ckpt").string() << '\n';
  return kOk;
}

int cmd_eval(RunConfig& c, std::ostream& out) {
  Restored r = restore(c);
  if (c.test_path.empty()) throw ConfigError("--test is required");
  const auto docs = encode(load_split(c.test_path, c.train.seed, true), r.vocab);
  for (const auto& d : docs) {
    if (d.label >= c.model.num_classes) {
      throw ConfigError("label " + std::to_string(d.label) + " outside the checkpoint's " +
                        std::to_string(c.model.num_classes) + " classes");
    }
  }
  const EvalResult e = evaluate(r.model, docs, c.train.batch_size, c.train.eval_threads);
  nlohmann::ordered_json j;
  j["loss"] = e.loss;
  j["accuracy"] = e.accuracy;
  out << j.dump() << '\n';
  return kOk;
}

int cmd_inspect(RunConfig& c, std::ostream& out) {
  Restored r = restore(c);
  if (!c.model.uses_semantic_attention()) {
    throw ConfigError("variant " + std::string(variant_name(c.model.variant)) +
                      " has no attention block to inspect");
  }
  std::vector<LabeledText> texts;
  if (!c.text.empty()) texts.push_back({0, c.text});
  if (!c.test_path.empty() && c.text.empty()) texts = load_split(c.test_path, c.train.seed, true);
  if (texts.empty()) throw ConfigError("inspect needs --text or --test");

  for (const auto& t : texts) {
    std::vector<std::string> tokens = tokenize(t.text);
    if (tokens.size() > c.model.max_len) tokens.resize(c.model.max_len);
    if (tokens.empty()) tokens.push_back(r.vocab.token(Vocabulary::kUnk));
    Document doc;
    for (const auto& tok : tokens) doc.ids.push_back(r.vocab.id(tok));
    const DocumentBatch batch = DocumentBatch::from_documents({&doc}, c.model.max_len);
    Tape tape;
    const Tensor& w = r.model.forward(tape, batch).attention_weights.value();
    const std::size_t len = batch.lengths[0];
    nlohmann::ordered_json j;
    j["tokens"] = tokens;
    auto rows = nlohmann::json::array();
    for (std::size_t i = 0; i < len; ++i) {
      std::vector<double> row(len);
      for (std::size_t k = 0; k < len; ++k) row[k] = w.at(0, i, k);
      rows.push_back(row);
    }
    j["weights"] = rows;
    j["variant"] = std::string(variant_name(c.model.variant));
    out << j.dump() << '\n';
  }
  return kOk;
}

int cmd_gradcheck(const RunConfig& c, std::ostream& out, std::ostream& err,
                  const std::vector<GradCheckCase>& extra) {
  std::vector<GradCheckCase> all = builtin_gradcheck_cases();
  all.insert(all.end(), extra.begin(), extra.end());
  std::vector<GradCheckCase> selected;
  if (c.ops.empty()) {
    selected = all;
  } else {
    for (const auto& name : split(c.ops, ',')) {
      auto it = std::find_if(all.begin(), all.end(), [&](const auto& k) { return k.op == name; });
      if (it == all.end()) throw ConfigError("ops: unknown op '" + name + "'");
      selected.push_back(*it);
    }
  }
  if (c.seeds == 0) throw ConfigError("seeds must be >= 1");
  const auto rows = run_gradcheck_suite(selected, c.train.seed, c.seeds);
  char line[256];
  std::snprintf(line, sizeof(line), "%-24s %14s %8s  %s\n", "op", "max_rel_error", "coords", "status");
  out << line;
  std::vector<std::string> failing;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%-24s %14.3e %8zu  %s", r.op.c_str(), r.max_rel_error,
                  r.coordinates, r.passed ? "ok" : "FAIL");
    out << line;
    if (!r.passed) {
      out << "  " << r.worst;
      failing.push_back(r.op);
    }
    out << '\n';
  }
  if (failing.empty()) return kOk;
  err << "gradcheck failed:";
  for (const auto& f : failing) err << ' ' << f;
  err << '\n';
  return kFailure;
}

int cmd_ablate(RunConfig& c, std::ostream& out, std::ostream& err) {
  const auto suite = parse_suite(c.suite);
  if (!suite) throw ConfigError("unknown suite '" + c.suite + "'");
  if (c.train_path.empty() || c.test_path.empty()) throw ConfigError("--train and --test are required");
  const Corpus corpus = build_corpus(load_split(c.train_path, c.train.seed, false),
                                     load_split(c.test_path, c.train.seed, true));
  c.model.vocab_size = corpus.vocab.size();
  c.model.num_classes = corpus.num_classes;
  c.model.validate();
  c.train.validate();
  const fs::path dir = prepare_out(c);
  TrainConfig tc = c.train;
  tc.eval_every_epoch = false;
  AblationReport report;
  try {
    report = run_ablation(*suite, c.model, corpus, embedding_source(c), tc, c.seeds,
                          [&](const std::string& msg) { err << msg << '\n'; });
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  const std::string csv = report.to_csv();
  write_text(dir / ("ablation_" + c.suite + ".csv"), csv);
  out << csv;
  return kOk;
}

}  // namespace

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "variant", "dim", "queries", "lstm-layers", "max-len", "relative-clip", "residual",
      "pooling", "layer-norm-affine", "vocab-size", "num-classes", "epochs", "lr", "lr-drops",
      "weight-decay", "decoupled-weight-decay", "batch-size", "seed", "eval-threads",
      "wall-clock", "float-parameters", "embeddings", "trainable-embeddings", "train", "test",
      "out", "suite", "seeds", "ops", "checkpoint", "text"};
  return keys;
}

Settings parse_config_text(std::string_view text) {
  Settings out;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const std::string body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = trim(std::string_view(body).substr(0, eq));
    if (!is_known(key)) {
      throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    out.emplace_back(std::move(key), trim(std::string_view(body).substr(eq + 1)));
  }
  return out;
}

Settings read_config_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read config file " + path.string());
  std::ostringstream s;
  s << f.rdbuf();
  return parse_config_text(s.str());
}

RunConfig resolve(const std::vector<Settings>& layers) {
  std::map<std::string, std::string> merged;
  for (const auto& layer : layers)
    for (const auto& [k, v] : layer) {
      if (!is_known(k)) throw ConfigError("unknown key '" + k + "'");
      merged[k] = v;
    }
  RunConfig c;
  if (auto it = merged.find("preset"); it != merged.end()) apply_preset(c, it->second);
  for (const auto& key : known_keys())
    if (auto it = merged.find(key); it != merged.end()) apply(c, key, it->second);
  return c;
}

std::string render(const RunConfig& c) {
  std::string drops;
  for (std::size_t e : c.train.lr_drop_epochs) drops += (drops.empty() ? "" : ",") + std::to_string(e);
  const std::map<std::string, std::string> values = {
      {"variant", std::string(variant_name(c.model.variant))},
      {"dim", std::to_string(c.model.dim)},
      {"queries", std::to_string(c.model.queries)},
      {"lstm-layers", std::to_string(c.model.lstm_layers)},
      {"max-len", std::to_string(c.model.max_len)},
      {"relative-clip", std::to_string(c.model.relative_clip)},
      {"residual", bool_name(c.model.residual)},
      {"pooling", pooling_name(c.model.pooling)},
      {"layer-norm-affine", bool_name(c.model.layer_norm_affine)},
      {"vocab-size", std::to_string(c.model.vocab_size)},
      {"num-classes", std::to_string(c.model.num_classes)},
      {"epochs", std::to_string(c.train.epochs)},
      {"lr", fmt_double(c.train.lr)},
      {"lr-drops", drops},
      {"weight-decay", fmt_double(c.train.weight_decay)},
      {"decoupled-weight-decay", bool_name(c.train.decoupled_weight_decay)},
      {"batch-size", std::to_string(c.train.batch_size)},
      {"seed", std::to_string(c.train.seed)},
      {"eval-threads", std::to_string(c.train.eval_threads)},
      {"wall-clock", bool_name(c.train.record_wall_time)},
      {"float-parameters", bool_name(c.train.float_parameters)},
      {"embeddings", c.embeddings},
      {"trainable-embeddings", bool_name(c.trainable_embeddings)},
      {"train", c.train_path},
      {"test", c.test_path},
      {"out", c.out},
      {"suite", c.suite},
      {"seeds", std::to_string(c.seeds)},
      {"ops", c.ops},
      {"checkpoint", c.checkpoint},
      {"text", c.text},
  };
  std::string out;
  for (const auto& key : known_keys()) out += key + " = " + values.at(key) + "\n";
  return out;
}

std::vector<LabeledText> load_split(const std::string& source, std::uint64_t seed, bool test_split) {
  constexpr std::string_view kOrder = "order:";
  if (source.rfind(kOrder, 0) == 0) {
    const auto parts = split(std::string_view(source).substr(kOrder.size()), ':');
    if (parts.size() != 2) throw ConfigError("synthetic source must look like order:N:L");
    const std::size_t n = to_size("order count", parts[0]);
    const std::size_t len = to_size("order length", parts[1]);
    std::uint64_t state = seed + (test_split ? 0x51ED270B27F4C8A1ULL : 0);
    return make_order_task(n, len, splitmix64(state));
  }
  if (!fs::is_regular_file(source)) throw IoError("data file not found: " + source);
  return read_labeled_csv(source);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const std::vector<GradCheckCase>& extra_cases) {
  CLI::App app{"CSPAN document classifier"};
  app.require_subcommand(1, 1);
  std::string config_path;
  app.add_option("--config", config_path, "key = value config file");
  std::map<std::string, std::string> flag_values;
  std::vector<std::pair<std::string, CLI::Option*>> flag_opts;
  flag_values["preset"];
  flag_opts.emplace_back("preset", app.add_option("--preset", flag_values["preset"], "base or big"));
  for (const auto& key : known_keys()) {
    flag_opts.emplace_back(key, app.add_option("--" + key, flag_values[key]));
  }
  for (const char* name : {"train", "eval", "gradcheck", "ablate", "inspect"}) {
    app.add_subcommand(name)->fallthrough();
  }

  std::vector<std::string> argv_storage = {"cspan"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_storage) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    Settings flags;
    for (const auto& [key, opt] : flag_opts)
      if (opt->count() > 0) flags.emplace_back(key, flag_values[key]);
    std::vector<Settings> layers;
    if (command == "eval" || command == "inspect") {
      // the training run's resolved config sits below any explicit file
      auto ck = std::find_if(flags.begin(), flags.end(), [](auto& kv) { return kv.first == "checkpoint"; });
      if (ck != flags.end()) {
        const fs::path saved = fs::path(ck->second).parent_path() / "config.txt";
        if (fs::is_regular_file(saved)) layers.push_back(read_config_file(saved));
      }
    }
    if (!config_path.empty()) layers.push_back(read_config_file(config_path));
    layers.push_back(flags);
    RunConfig c = resolve(layers);

    if (command == "train") return cmd_train(c, out, err);
    if (command == "eval") return cmd_eval(c, out);
    if (command == "inspect") return cmd_inspect(c, out);
    if (command == "gradcheck") return cmd_gradcheck(c, out, err, extra_cases);
    return cmd_ablate(c, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericFault& e) {
    err << "error: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace cspan::cli
