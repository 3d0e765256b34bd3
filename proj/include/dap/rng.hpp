// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace dap {

/// SplitMix64 (Steele/Lea/Vigna constants). This exact generator is part of
/// the on-disk contract: split manifests and epoch shuffles are reproducible
/// from the seed alone, independent of platform or standard library.
struct SplitMix64 {
  uint64_t state = 0;

  SplitMix64() = default;
  explicit SplitMix64(uint64_t seed) : state(seed) {}

  uint64_t next() {
    uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Bounded draw by modulo; the bias is irrelevant at the sizes used here and
  // keeping it branch-free keeps the sequence trivially portable.
  uint64_t next_below(uint64_t bound) { return bound == 0 ? 0 : next() % bound; }

  // Uniform in [0, 1) with 53 random bits.
  double next_unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Box-Muller, two fresh uniforms per draw (no cached second value, so the
  // stream position is a pure function of the draw count).
  double next_gaussian() {
    double u1 = next_unit();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double u2 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }
};

/// Mixes two seeds into one stream seed (used for per-epoch shuffles).
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  SplitMix64 g(a ^ (b + 0x9E3779B97F4A7C15ull));
  return g.next();
}

/// In-place Fisher-Yates driven by SplitMix64.
template <typename T>
void fisher_yates(std::vector<T>& values, SplitMix64& rng) {
  for (size_t i = values.size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(rng.next_below(i));
    std::swap(values[i - 1], values[j]);
  }
}

/// Seeded permutation of [0, n).
inline std::vector<size_t> seeded_permutation(size_t n, uint64_t seed) {
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  SplitMix64 rng(seed);
  fisher_yates(order, rng);
  return order;
}

/// Permutation used for epoch e of a run with the given seed. Shared by the
/// single-worker trainer and the distributed sampler so both see the same
/// epoch order.
inline std::vector<size_t> epoch_permutation(size_t n, uint64_t seed, int epoch) {
  return seeded_permutation(n, mix_seed(seed, static_cast<uint64_t>(epoch)));
}

}  // namespace dap
