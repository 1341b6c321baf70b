// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace cspan {

/// xoshiro256** seeded through splitmix64.
///
/// All randomness in the project flows through this generator so that runs
/// reproduce bit-for-bit across compilers and standard libraries (the
/// std:: distributions are implementation-defined). Seeding: the 64-bit seed
/// is fed to splitmix64 and its first four outputs become the state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next();

  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via Box-Muller.
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

  /// Derives an independent stream, e.g. one per ablation seed.
  Rng fork(std::uint64_t stream);

 private:
  std::uint64_t s_[4];
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace cspan
