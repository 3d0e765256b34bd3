// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dap/error.hpp"

namespace dap {

/// Little-endian byte buffer writer. All binary artifacts go through this so
/// their layout does not depend on host endianness.
class ByteWriter {
 public:
  void put_u8(uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void put_u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void put_u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void put_f64(double v) { put_u64(std::bit_cast<uint64_t>(v)); }
  void put_bytes(std::string_view bytes) { buf_.append(bytes); }
  void put_string(std::string_view s) {
    put_u32(static_cast<uint32_t>(s.size()));
    buf_.append(s);
  }

  const std::string& bytes() const { return buf_; }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  uint8_t get_u8() { return static_cast<uint8_t>(take(1)[0]); }
  uint32_t get_u32() {
    auto s = take(4);
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[static_cast<size_t>(i)]);
    return v;
  }
  uint64_t get_u64() {
    auto s = take(8);
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[static_cast<size_t>(i)]);
    return v;
  }
  double get_f64() { return std::bit_cast<double>(get_u64()); }
  std::string get_string() {
    const uint32_t n = get_u32();
    return std::string(take(n));
  }
  std::string_view get_bytes(size_t n) { return take(n); }

  bool at_end() const { return pos_ == bytes_.size(); }
  size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string_view take(size_t n) {
    if (pos_ + n > bytes_.size()) raise(ErrorCode::InvalidInput, "truncated binary file");
    std::string_view out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::string_view bytes_;
  size_t pos_ = 0;
};

/// Reads a whole file; throws MissingFile if it cannot be opened.
std::string read_file(const std::string& path);

/// Writes bytes via a temp file + rename so readers never observe a partial
/// artifact.
void atomic_write_file(const std::string& path, std::string_view bytes,
                       ErrorCode failure_code = ErrorCode::WriteFailure);

bool file_exists(const std::string& path);

}  // namespace dap
