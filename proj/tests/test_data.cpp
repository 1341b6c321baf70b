// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>

#include "cspan/error.hpp"
#include "cspan/data.hpp"
#include "cspan/rng.hpp"
#include "test_util.hpp"

using namespace cspan;
using cspan::testing_util::ScratchDir;
using cspan::testing_util::write_file;

TEST(Tokenize, LowercasesAndSplitsPunctuation) {
  const std::vector<std::string> want = {"stocks", "rally", ",", "markets", "rose", "."};
  EXPECT_EQ(tokenize("Stocks RALLY, markets rose."), want);
  EXPECT_TRUE(tokenize("   \t\n").empty());
}

TEST(Vocabulary, ReservedIdsAndFrequencyOrder) {
  const Vocabulary v = Vocabulary::build({{"b", "a", "c", "a"}, {"b", "a"}});
  EXPECT_EQ(v.token(Vocabulary::kPad), "<pad>");
  EXPECT_EQ(v.token(Vocabulary::kUnk), "<unk>");
  EXPECT_EQ(v.id("a"), 2u);
  EXPECT_EQ(v.id("b"), 3u);
  EXPECT_EQ(v.id("c"), 4u);
  EXPECT_EQ(v.id("zzz"), Vocabulary::kUnk);
  EXPECT_EQ(v.size(), 5u);
}

TEST(Vocabulary, MinCountAndMaxSize) {
  const Vocabulary v = Vocabulary::build({{"a", "a", "b", "c", "c", "c"}}, 2);
  EXPECT_TRUE(v.contains("a"));
  EXPECT_FALSE(v.contains("b"));
  const Vocabulary capped = Vocabulary::build({{"a", "a", "b", "c", "c", "c"}}, 1, 2);
  EXPECT_EQ(capped.size(), 4u);  // reserved ids are not counted against the cap
  EXPECT_TRUE(capped.contains("c"));
  EXPECT_TRUE(capped.contains("a"));
  EXPECT_FALSE(capped.contains("b"));
}

TEST(Vocabulary, SaveLoadRoundTrip) {
  ScratchDir dir;
  const Vocabulary v = Vocabulary::build({{"x", "y", "y", "z"}});
  v.save(dir / "vocab.txt");
  const Vocabulary back = Vocabulary::load(dir / "vocab.txt");
  ASSERT_EQ(back.size(), v.size());
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(back.token(i), v.token(i));
}

TEST(Embeddings, RandomRangeAndZeroPad) {
  Rng rng(5);
  const EmbeddingTable e = random_embeddings(10, 6, rng);
  for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(e.weights.at(0, j), 0.0);
  for (std::size_t i = 6; i < e.weights.size(); ++i) {
    EXPECT_LE(std::abs(e.weights[i]), kEmbeddingInitRange);
  }
}

TEST(Embeddings, GloveHitsMissesAndPad) {
  ScratchDir dir;
  write_file(dir / "vec.txt", "apple 0.1 0.2 0.3 0.4\nbanana -1 -2 -3 -4\nunused 9 9 9 9\n");
  Vocabulary v;
  v.add("apple");
  v.add("banana");
  v.add("cherry");
  Rng rng(2);
  const EmbeddingTable e = load_glove(dir / "vec.txt", v, 4, rng);
  EXPECT_EQ(e.weights.at(v.id("apple"), 2), 0.3);
  EXPECT_EQ(e.weights.at(v.id("banana"), 0), -1.0);
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_EQ(e.weights.at(Vocabulary::kPad, j), 0.0);
    EXPECT_EQ(e.weights.at(v.id("cherry"), j), e.weights.at(Vocabulary::kUnk, j));
    EXPECT_LE(std::abs(e.weights.at(Vocabulary::kUnk, j)), 0.05);
  }
}

TEST(Embeddings, GloveWrongWidthNamesLine) {
  ScratchDir dir;
  write_file(dir / "vec.txt", "apple 0.1 0.2 0.3 0.4\nbanana -1 -2 -3\n");
  Vocabulary v;
  v.add("apple");
  Rng rng(2);
  try {
    load_glove(dir / "vec.txt", v, 4, rng);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("vec.txt:2:"), std::string::npos) << e.what();
  }
}

TEST(Csv, AgNewsRowShape) {
  const auto rows = parse_labeled_csv("\"3\",\"Stocks rally\",\"Markets rose\"\n");
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].label, 2u);
  EXPECT_EQ(rows[0].text, "Stocks rally Markets rose");
}

TEST(Csv, QuotedCommaAndEscapedQuote) {
  const auto rows = parse_labeled_csv("\"1\",\"a, b\",\"say \"\"hi\"\"\"\r\n2,plain,text\n");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].text, "a, b say \"hi\"");
  EXPECT_EQ(rows[1].label, 1u);
}

TEST(Csv, BadRowsAreParseErrorsWithRowNumber) {
  try {
    parse_labeled_csv("1,a,b\nx,a,b\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_labeled_csv("1,a\n"), ParseError);
  EXPECT_THROW(parse_labeled_csv("1,a,b,c\n"), ParseError);
}

TEST(Csv, WriteReadRoundTrip) {
  ScratchDir dir;
  const std::vector<LabeledText> docs = {{0, "hello, world"}, {3, "quote \" inside"}};
  write_labeled_csv(dir / "d.csv", docs);
  const auto back = read_labeled_csv(dir / "d.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].label, 0u);
  EXPECT_EQ(back[1].label, 3u);
  EXPECT_EQ(tokenize(back[0].text), tokenize(docs[0].text));
  EXPECT_EQ(tokenize(back[1].text), tokenize(docs[1].text));
}

namespace {

std::pair<std::size_t, std::size_t> marker_positions(const std::vector<std::string>& toks) {
  const auto a = std::find(toks.begin(), toks.end(), std::string(kMarkerA)) - toks.begin();
  const auto b = std::find(toks.begin(), toks.end(), std::string(kMarkerB)) - toks.begin();
  return {static_cast<std::size_t>(a), static_cast<std::size_t>(b)};
}

}  // namespace

TEST(OrderTask, LabelIsMarkerOrder) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto docs = make_order_task(200, 7, seed);
    ASSERT_EQ(docs.size(), 200u);
    std::size_t ones = 0;
    for (const auto& d : docs) {
      const auto toks = tokenize(d.text);
      ASSERT_EQ(toks.size(), 7u);
      EXPECT_EQ(std::count(toks.begin(), toks.end(), std::string(kMarkerA)), 1);
      EXPECT_EQ(std::count(toks.begin(), toks.end(), std::string(kMarkerB)), 1);
      const auto [a, b] = marker_positions(toks);
      EXPECT_EQ(d.label, a < b ? 1u : 0u);
      ones += d.label;
      for (const auto& t : toks)
        if (t != kMarkerA && t != kMarkerB) {
          ASSERT_EQ(t[0], 'x');
          EXPECT_LT(std::stoi(t.substr(1)), 20);
        }
    }
    EXPECT_LE(std::abs(static_cast<long>(ones) - 100), 2);
  }
}

TEST(OrderTask, ReversalFlipsLabel) {
  for (const auto& d : make_order_task(50, 9, 4)) {
    auto toks = tokenize(d.text);
    std::reverse(toks.begin(), toks.end());
    const auto [a, b] = marker_positions(toks);
    EXPECT_EQ(a < b ? 1u : 0u, 1u - d.label);
  }
}

TEST(OrderTask, ClassesShareBagOfWordsStatistics) {
  // marker counts are identical per document, so any count difference is filler noise
  std::map<std::string, std::size_t> counts[2];
  for (const auto& d : make_order_task(4000, 12, 9))
    for (const auto& t : tokenize(d.text)) ++counts[d.label][t];
  EXPECT_EQ(counts[0][std::string(kMarkerA)], counts[1][std::string(kMarkerA)]);
  EXPECT_EQ(counts[0][std::string(kMarkerB)], counts[1][std::string(kMarkerB)]);
}

TEST(OrderTask, Deterministic) {
  const auto a = make_order_task(30, 5, 17), b = make_order_task(30, 5, 17);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].text, b[i].text);
  EXPECT_THROW(make_order_task(3, 1, 0), ContractError);
}

TEST(Encode, EmptyTextBecomesUnk) {
  const Vocabulary v = Vocabulary::build({{"a"}});
  const auto docs = encode({{1, ""}, {0, "a b"}}, v);
  EXPECT_EQ(docs[0].ids, std::vector<std::size_t>{Vocabulary::kUnk});
  EXPECT_EQ(docs[1].ids, (std::vector<std::size_t>{v.id("a"), Vocabulary::kUnk}));
}

TEST(Batching, MaskExample) {
  Document a{{2, 3, 4}, 0}, b{{2, 2, 2, 2, 2}, 1};
  const DocumentBatch batch = DocumentBatch::from_documents({&a, &b}, 10);
  EXPECT_EQ(batch.max_len, 5u);
  const Mask want = {1, 1, 1, 0, 0, 1, 1, 1, 1, 1};
  EXPECT_EQ(batch.mask(), want);
  EXPECT_EQ(batch.ids[3], Vocabulary::kPad);
}

TEST(Batching, PartitionsCorpusAndTruncates) {
  std::vector<Document> docs;
  Rng rng(8);
  for (std::size_t i = 0; i < 103; ++i) {
    Document d;
    d.label = i;
    d.ids.assign(1 + rng.below(20), 2);
    docs.push_back(d);
  }
  for (std::optional<std::uint64_t> seed : {std::optional<std::uint64_t>{}, std::optional<std::uint64_t>{5}}) {
    const auto batches = make_batches(docs, 10, 12, seed);
    EXPECT_EQ(batches.size(), 11u);
    EXPECT_EQ(batches.back().batch, 3u);
    std::multiset<std::size_t> labels;
    for (const auto& b : batches) {
      EXPECT_LE(b.max_len, 12u);
      for (std::size_t i = 0; i < b.batch; ++i) {
        labels.insert(b.labels[i]);
        EXPECT_EQ(b.lengths[i], std::min<std::size_t>(docs[b.labels[i]].ids.size(), 12));
      }
    }
    std::multiset<std::size_t> want;
    for (std::size_t i = 0; i < 103; ++i) want.insert(i);
    EXPECT_EQ(labels, want);
  }
}

TEST(Batching, SeededShuffleIsDeterministic) {
  std::vector<Document> docs(40);
  for (std::size_t i = 0; i < docs.size(); ++i) docs[i] = {{2}, i};
  const auto a = make_batches(docs, 7, 4, 99), b = make_batches(docs, 7, 4, 99), c = make_batches(docs, 7, 4, 100);
  std::vector<std::size_t> la, lb, lc;
  for (const auto& x : a) la.insert(la.end(), x.labels.begin(), x.labels.end());
  for (const auto& x : b) lb.insert(lb.end(), x.labels.begin(), x.labels.end());
  for (const auto& x : c) lc.insert(lc.end(), x.labels.begin(), x.labels.end());
  EXPECT_EQ(la, lb);
  EXPECT_NE(la, lc);
}

TEST(Batching, RejectsBadArguments) {
  std::vector<Document> docs = {{{2}, 0}};
  EXPECT_THROW(make_batches({}, 4, 4, std::nullopt), ContractError);
  EXPECT_THROW(make_batches(docs, 0, 4, std::nullopt), ContractError);
  EXPECT_THROW(make_batches(docs, 4, 0, std::nullopt), ContractError);
}
