// Copyright 2026 The hefl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "hefl/error.hpp"

namespace hefl {

using Bytes = std::vector<std::uint8_t>;

/// Appends little-endian fixed-width values to a byte buffer.
class ByteWriter {
 public:
  explicit ByteWriter(Bytes& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  void u64s(std::span<const std::uint64_t> v) {
    const std::size_t at = out_.size();
    out_.resize(at + 8 * v.size());
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(out_.data() + at, v.data(), 8 * v.size());
    } else {
      for (std::size_t i = 0; i < v.size(); ++i) {
        for (int b = 0; b < 8; ++b) out_[at + 8 * i + b] = static_cast<std::uint8_t>(v[i] >> (8 * b));
      }
    }
  }

  std::size_t size() const { return out_.size(); }
  /// Overwrites a previously written u64 at byte offset `at`.
  void patch_u64(std::size_t at, std::uint64_t v) {
    for (int b = 0; b < 8; ++b) out_[at + b] = static_cast<std::uint8_t>(v >> (8 * b));
  }

 private:
  void put(std::uint64_t v, int width) {
    for (int b = 0; b < width; ++b) out_.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
  }
  Bytes& out_;
};

/// Bounds-checked little-endian reader; throws FormatError on truncation.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::span<const std::uint8_t> raw(std::size_t n) {
    need(n);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::string str() {
    const std::uint32_t n = u32();
    auto s = raw(n);
    return {s.begin(), s.end()};
  }
  void u64s(std::span<std::uint64_t> out) {
    need(8 * out.size());
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(out.data(), in_.data() + pos_, 8 * out.size());
      pos_ += 8 * out.size();
    } else {
      for (auto& v : out) v = get(8);
    }
  }

  std::size_t remaining() const { return in_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw FormatError("truncated input");
  }
  std::uint64_t get(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int b = 0; b < width; ++b) v |= static_cast<std::uint64_t>(in_[pos_ + b]) << (8 * b);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

/// 64-bit FNV-1a, used for content hashes in logs and manifests.
inline std::uint64_t fnv1a(std::span<const std::uint8_t> data,
                           std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (std::uint8_t b : data) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace hefl
