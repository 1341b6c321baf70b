// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cspan/ops.hpp"
#include "cspan/tensor.hpp"

namespace cspan {

class Rng;

/// Lowercases ASCII, splits ASCII punctuation into single-character tokens
/// and otherwise splits on whitespace. Bytes >= 0x80 are kept as-is.
std::vector<std::string> tokenize(std::string_view text);

/// Token <-> id map. Ids 0 and 1 are reserved for padding and unknown words.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocabulary();

  /// Most frequent tokens first (ties by byte order). `max_size` caps the
  /// words after the two reserved ids; 0 keeps everything that occurs at least `min_count` times.
  static Vocabulary build(const std::vector<std::vector<std::string>>& docs,
                          std::size_t min_count = 1, std::size_t max_size = 0);

  std::size_t add(const std::string& token);
  bool contains(std::string_view token) const;
  /// kUnk for unknown tokens.
  std::size_t id(std::string_view token) const;
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  std::size_t size() const { return tokens_.size(); }

  /// One token per line; line n holds id n + 2.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Word-vector matrix [V, d]. Row kPad is zero and excluded from updates.
struct EmbeddingTable {
  Tensor weights;
  bool trainable = true;
  std::size_t dim() const { return weights.dim(1); }
};

constexpr double kEmbeddingInitRange = 0.05;

/// Uniform [-range, range] rows, zero PAD row.
EmbeddingTable random_embeddings(std::size_t vocab_size, std::size_t dim, Rng& rng,
                                 double range = kEmbeddingInitRange);

/// Reads "token v1 ... vd" lines. Vocabulary words missing from the file
/// (and UNK itself) share one seeded uniform vector.
EmbeddingTable load_glove(const std::filesystem::path& path, const Vocabulary& vocab,
                          std::size_t dim, Rng& rng);

struct LabeledText {
  std::size_t label = 0;
  std::string text;
};

/// Rows "class","title","description" with a 1-based class.
std::vector<LabeledText> read_labeled_csv(const std::filesystem::path& path);
std::vector<LabeledText> parse_labeled_csv(std::string_view content);
/// Writes the same three-column shape (text as title, empty description).
void write_labeled_csv(const std::filesystem::path& path, const std::vector<LabeledText>& docs);

/// Synthetic order task: L tokens from a 20-word filler vocabulary plus the
/// markers "a" and "b" at distinct positions; label 1 iff "a" comes first.
std::vector<LabeledText> make_order_task(std::size_t n, std::size_t length, std::uint64_t seed);

inline constexpr std::string_view kMarkerA = "a";
inline constexpr std::string_view kMarkerB = "b";

struct Document {
  std::vector<std::size_t> ids;
  std::size_t label = 0;
};

/// Empty texts encode as a single UNK token so every document has at least
/// one valid position.
std::vector<Document> encode(const std::vector<LabeledText>& docs, const Vocabulary& vocab);

/// Padded id grid [batch, max_len] with trailing padding.
struct DocumentBatch {
  std::size_t batch = 0;
  std::size_t max_len = 0;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> lengths;
  std::vector<std::size_t> labels;

  bool valid(std::size_t b, std::size_t t) const { return t < lengths[b]; }
  /// [batch, max_len] validity mask.
  Mask mask() const;
  static DocumentBatch from_documents(const std::vector<const Document*>& docs,
                                      std::size_t max_len);
};

/// Truncates to max_len, pads to each batch's longest document, keeps the
/// final partial batch. Shuffles first when a seed is given.
std::vector<DocumentBatch> make_batches(const std::vector<Document>& docs, std::size_t batch_size,
                                        std::size_t max_len,
                                        std::optional<std::uint64_t> shuffle_seed);

}  // namespace cspan
