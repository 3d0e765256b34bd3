// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace dap {

/// Incremental FNV-1a (64-bit). Used for config hashes and artifact content
/// hashes; stable across runs and platforms.
struct Fnv1a64 {
  static constexpr uint64_t kOffset = 14695981039346656037ull;
  static constexpr uint64_t kPrime = 1099511628211ull;

  uint64_t value = kOffset;

  void update(const void* data, size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < size; ++i) {
      value ^= bytes[i];
      value *= kPrime;
    }
  }
  void update(std::string_view s) { update(s.data(), s.size()); }
};

inline uint64_t fnv1a64(std::string_view bytes) {
  Fnv1a64 h;
  h.update(bytes);
  return h.value;
}

inline std::string hash_to_hex(uint64_t value) {
  static const char* digits = "0123456789abcdef";
  std::string out = "0x";
  for (int shift = 60; shift >= 0; shift -= 4) out.push_back(digits[(value >> shift) & 0xF]);
  return out;
}

uint64_t hex_to_hash(std::string_view hex);  // inverse of hash_to_hex

}  // namespace dap
