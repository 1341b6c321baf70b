// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <bit>
#include <cstring>

#include "cspan/error.hpp"
#include "cspan/checkpoint.hpp"
#include "model_fixtures.hpp"
#include "test_util.hpp"

using namespace cspan;
using namespace cspan::testing_util;

namespace {

// Independent reader of the on-disk layout; returns the element total.
std::size_t walk_checkpoint(const std::string& bytes, std::vector<std::string>* names = nullptr) {
  std::size_t pos = 0;
  auto take = [&](std::size_t n) {
    if (pos + n > bytes.size()) throw std::runtime_error("truncated");
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
    pos += n;
    return p;
  };
  auto le = [&](std::size_t n) {
    const auto* p = take(n);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < n; ++i) v |= std::uint64_t(p[i]) << (8 * i);
    return v;
  };
  if (std::memcmp(take(7), "CSPAN1\n", 7) != 0) throw std::runtime_error("magic");
  const auto count = le(4);
  std::size_t total = 0;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = le(2);
    const auto* name = take(len);
    if (names) names->emplace_back(reinterpret_cast<const char*>(name), len);
    const auto rank = le(1);
    std::size_t n = 1;
    for (std::uint64_t r = 0; r < rank; ++r) n *= le(4);
    take(4 * n);
    total += n;
  }
  if (pos != bytes.size()) throw std::runtime_error("trailing");
  return total;
}

}  // namespace

TEST(Checkpoint, RoundTripIsExactAfterFloatRounding) {
  ScratchDir dir;
  CspanModel a = small_model(small_config(Variant::kCascade), 1);
  round_to_float(a.parameters());
  save_checkpoint(dir / "m.ckpt", a.parameters());
  CspanModel b = small_model(small_config(Variant::kCascade), 2);
  load_checkpoint(dir / "m.ckpt", b.parameters());
  for (const auto& p : a.parameters()) EXPECT_EQ(p.value, b.parameters().value(p.name)) << p.name;
}

TEST(Checkpoint, LayoutWalkMatchesParamCount) {
  ScratchDir dir;
  for (Variant v : all_variants()) {
    const CspanConfig c = small_config(v, 6, 3);
    CspanModel m = small_model(c, 1);
    save_checkpoint(dir / "m.ckpt", m.parameters());
    std::vector<std::string> names;
    EXPECT_EQ(walk_checkpoint(read_file(dir / "m.ckpt"), &names), param_count(c).total);
    EXPECT_EQ(names.front(), "emb.table");
  }
}

TEST(Checkpoint, FloatsAreLittleEndianIeee) {
  ScratchDir dir;
  ParameterSet ps;
  ps.add({"w", Tensor::vector({1.0, -2.5})});
  save_checkpoint(dir / "w.ckpt", ps);
  const std::string bytes = read_file(dir / "w.ckpt");
  ASSERT_EQ(bytes.size(), 7u + 4 + 2 + 1 + 1 + 4 + 8);
  EXPECT_EQ(bytes[7], 1);  // count
  const std::size_t data = 7 + 4 + 2 + 1 + 1 + 4;
  std::uint32_t raw = 0;
  for (int i = 0; i < 4; ++i) raw |= std::uint32_t(static_cast<unsigned char>(bytes[data + 4 + i])) << (8 * i);
  EXPECT_EQ(std::bit_cast<float>(raw), -2.5f);
}

TEST(Checkpoint, RejectsUnknownNameAndLeavesTargetUntouched) {
  ScratchDir dir;
  ParameterSet src;
  src.add({"w", Tensor::vector({1.0})});
  src.add({"bogus", Tensor::vector({2.0})});
  save_checkpoint(dir / "x.ckpt", src);
  ParameterSet dst;
  dst.add({"w", Tensor::vector({7.0})});
  EXPECT_THROW(load_checkpoint(dir / "x.ckpt", dst), ParseError);
  EXPECT_EQ(dst.value("w")[0], 7.0);
}

TEST(Checkpoint, RejectsDimensionMismatchAndMissing) {
  ScratchDir dir;
  ParameterSet src;
  src.add({"w", Tensor::vector({1.0, 2.0})});
  save_checkpoint(dir / "x.ckpt", src);
  ParameterSet wider;
  wider.add({"w", Tensor::vector({0, 0, 0})});
  EXPECT_THROW(load_checkpoint(dir / "x.ckpt", wider), ParseError);
  ParameterSet more;
  more.add({"w", Tensor::vector({0, 0})});
  more.add({"v", Tensor::vector({0})});
  EXPECT_THROW(load_checkpoint(dir / "x.ckpt", more), ParseError);
}

TEST(Checkpoint, RejectsTruncationAndTrailingBytes) {
  ScratchDir dir;
  ParameterSet src;
  src.add({"w", Tensor::vector({1.0, 2.0})});
  save_checkpoint(dir / "x.ckpt", src);
  const std::string bytes = read_file(dir / "x.ckpt");
  ParameterSet dst;
  dst.add({"w", Tensor::vector({0, 0})});
  write_file(dir / "short.ckpt", bytes.substr(0, bytes.size() - 1));
  EXPECT_THROW(load_checkpoint(dir / "short.ckpt", dst), ParseError);
  write_file(dir / "long.ckpt", bytes + "x");
  EXPECT_THROW(load_checkpoint(dir / "long.ckpt", dst), ParseError);
  write_file(dir / "magic.ckpt", "CSPAN2\n" + bytes.substr(7));
  EXPECT_THROW(load_checkpoint(dir / "magic.ckpt", dst), ParseError);
}
