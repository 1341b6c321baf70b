// SPDX-License-Identifier: Apache-2.0
#include "cspan/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "cspan/error.hpp"
#include "cspan/rng.hpp"

namespace cspan {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  flush();
  return out;
}

// Vocabulary ----------------------------------------------------------------

Vocabulary::Vocabulary() {
  add(std::string(kPadToken));
  add(std::string(kUnkToken));
}

std::size_t Vocabulary::add(const std::string& token) {
  if (auto it = index_.find(token); it != index_.end()) return it->second;
  tokens_.push_back(token);
  index_.emplace(token, tokens_.size() - 1);
  return tokens_.size() - 1;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.find(std::string(token)) != index_.end();
}

std::size_t Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& docs,
                             std::size_t min_count, std::size_t max_size) {
  std::map<std::string, std::size_t> counts;
  for (const auto& doc : docs)
    for (const auto& tok : doc) ++counts[tok];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (const auto& [tok, n] : ranked) {
    if (n < min_count) break;
    if (max_size && v.size() >= max_size + 2) break;
    v.add(tok);
  }
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write vocabulary " + path.string());
  for (std::size_t i = 2; i < tokens_.size(); ++i) out << tokens_[i] << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read vocabulary " + path.string());
  Vocabulary v;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (v.contains(line)) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": duplicate token '" +
                       line + "'");
    }
    v.add(line);
  }
  return v;
}

// Embeddings ----------------------------------------------------------------

EmbeddingTable random_embeddings(std::size_t vocab_size, std::size_t dim, Rng& rng, double range) {
  if (!(range >= 0.0)) throw ContractError("random_embeddings: range must be >= 0");
  EmbeddingTable e;
  e.weights = Tensor::uniform({vocab_size, dim}, -range, range, rng);
  std::fill_n(e.weights.data().begin() + Vocabulary::kPad * dim, dim, 0.0);
  return e;
}

EmbeddingTable load_glove(const std::filesystem::path& path, const Vocabulary& vocab,
                          std::size_t dim, Rng& rng) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read embeddings " + path.string());

  std::vector<double> unk(dim);
  for (auto& v : unk) v = rng.uniform(-kEmbeddingInitRange, kEmbeddingInitRange);

  EmbeddingTable e;
  e.weights = Tensor({vocab.size(), dim});
  std::vector<bool> found(vocab.size(), false);

  std::string line;
  std::size_t lineno = 0;
  std::vector<double> values;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto sp = line.find(' ');
    const std::string token = line.substr(0, sp);
    values.clear();
    const char* p = sp == std::string::npos ? line.data() + line.size() : line.data() + sp;
    const char* end = line.data() + line.size();
    while (p < end) {
      while (p < end && *p == ' ') ++p;
      if (p == end) break;
      double v = 0.0;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc()) {
        throw ParseError(path.string() + ":" + std::to_string(lineno) + ": bad number");
      }
      values.push_back(v);
      p = next;
    }
    if (values.size() != dim) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                       std::to_string(dim) + " values, found " + std::to_string(values.size()));
    }
    if (!vocab.contains(token)) continue;
    const std::size_t id = vocab.id(token);
    if (id == Vocabulary::kPad || id == Vocabulary::kUnk) continue;
    std::copy(values.begin(), values.end(), e.weights.data().begin() + id * dim);
    found[id] = true;
  }
  for (std::size_t id = 1; id < vocab.size(); ++id) {
    if (!found[id]) std::copy(unk.begin(), unk.end(), e.weights.data().begin() + id * dim);
  }
  return e;
}

// CSV -----------------------------------------------------------------------

namespace {

/// Splits content into records of fields; quoted fields may span lines.
std::vector<std::vector<std::string>> parse_csv_records(std::string_view s) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> fields;
  std::string field;
  bool in_quotes = false;
  bool any = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < s.size() && s[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        any = true;
        break;
      case ',':
        fields.push_back(std::move(field));
        field.clear();
        any = true;
        break;
      case '\r':
        break;
      case '\n':
        if (any || !field.empty()) {
          fields.push_back(std::move(field));
          records.push_back(std::move(fields));
        }
        fields.clear();
        field.clear();
        any = false;
        break;
      default:
        field.push_back(c);
        any = true;
    }
  }
  if (in_quotes) throw ParseError("csv: unterminated quoted field at end of input");
  if (any || !field.empty()) {
    fields.push_back(std::move(field));
    records.push_back(std::move(fields));
  }
  return records;
}

std::string quote_csv(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  return out + "\"";
}

}  // namespace

std::vector<LabeledText> parse_labeled_csv(std::string_view content) {
  const auto records = parse_csv_records(content);
  std::vector<LabeledText> docs;
  docs.reserve(records.size());
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto& f = records[r];
    const std::string where = "csv row " + std::to_string(r + 1);
    if (f.size() != 3) {
      throw ParseError(where + ": expected 3 fields, found " + std::to_string(f.size()));
    }
    long cls = 0;
    const auto& c = f[0];
    auto [p, ec] = std::from_chars(c.data(), c.data() + c.size(), cls);
    if (ec != std::errc() || p != c.data() + c.size() || cls < 1) {
      throw ParseError(where + ": class '" + c + "' is not a positive integer");
    }
    docs.push_back({static_cast<std::size_t>(cls - 1), f[1] + " " + f[2]});
  }
  return docs;
}

std::vector<LabeledText> read_labeled_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_labeled_csv(ss.str());
}

void write_labeled_csv(const std::filesystem::path& path, const std::vector<LabeledText>& docs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& d : docs) {
    out << quote_csv(std::to_string(d.label + 1)) << ',' << quote_csv(d.text) << ",\"\"\n";
  }
}

// Synthetic order task ---------------------------------------------------------

std::vector<LabeledText> make_order_task(std::size_t n, std::size_t length, std::uint64_t seed) {
  if (length < 2) throw ContractError("make_order_task: length must be >= 2");
  Rng rng(seed);
  std::vector<LabeledText> docs;
  docs.reserve(n);
  std::vector<std::string> tokens(length);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % 2;
    for (auto& t : tokens) t = "x" + std::to_string(rng.below(20));
    const std::size_t p = rng.below(length);
    std::size_t q = rng.below(length - 1);
    if (q >= p) ++q;
    const std::size_t first = std::min(p, q), second = std::max(p, q);
    tokens[first] = std::string(label ? kMarkerA : kMarkerB);
    tokens[second] = std::string(label ? kMarkerB : kMarkerA);
    std::string text;
    for (std::size_t t = 0; t < length; ++t) {
      if (t) text += ' ';
      text += tokens[t];
    }
    docs.push_back({label, std::move(text)});
  }
  rng.shuffle(docs);
  return docs;
}

// Batching --------------------------------------------------------------------

std::vector<Document> encode(const std::vector<LabeledText>& docs, const Vocabulary& vocab) {
  std::vector<Document> out;
  out.reserve(docs.size());
  for (const auto& d : docs) {
    Document doc;
    doc.label = d.label;
    for (const auto& tok : tokenize(d.text)) doc.ids.push_back(vocab.id(tok));
    if (doc.ids.empty()) doc.ids.push_back(Vocabulary::kUnk);
    out.push_back(std::move(doc));
  }
  return out;
}

Mask DocumentBatch::mask() const { return key_mask(lengths, 1, max_len); }

DocumentBatch DocumentBatch::from_documents(const std::vector<const Document*>& docs,
                                            std::size_t max_len) {
  if (docs.empty()) throw ContractError("DocumentBatch: no documents");
  if (max_len == 0) throw ContractError("DocumentBatch: max_len must be >= 1");
  DocumentBatch b;
  b.batch = docs.size();
  for (const Document* d : docs) {
    if (d->ids.empty()) throw ContractError("DocumentBatch: empty document");
    b.lengths.push_back(std::min(d->ids.size(), max_len));
    b.labels.push_back(d->label);
  }
  b.max_len = *std::max_element(b.lengths.begin(), b.lengths.end());
  b.ids.assign(b.batch * b.max_len, Vocabulary::kPad);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    std::copy_n(docs[i]->ids.begin(), b.lengths[i], b.ids.begin() + i * b.max_len);
  }
  return b;
}

std::vector<DocumentBatch> make_batches(const std::vector<Document>& docs, std::size_t batch_size,
                                        std::size_t max_len,
                                        std::optional<std::uint64_t> shuffle_seed) {
  if (docs.empty()) throw ContractError("make_batches: empty corpus");
  if (batch_size == 0) throw ContractError("make_batches: batch_size must be >= 1");
  if (max_len == 0) throw ContractError("make_batches: max_len must be >= 1");
  std::vector<const Document*> order;
  order.reserve(docs.size());
  for (const auto& d : docs) order.push_back(&d);
  if (shuffle_seed) {
    Rng rng(*shuffle_seed);
    rng.shuffle(order);
  }
  std::vector<DocumentBatch> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    const std::size_t end = std::min(order.size(), i + batch_size);
    batches.push_back(DocumentBatch::from_documents(
        std::vector<const Document*>(order.begin() + i, order.begin() + end), max_len));
  }
  return batches;
}

}  // namespace cspan
