#pragma once

// Canonical byte encoding: little-endian integers, IEEE-754 doubles by bit
// pattern, u32 length prefixes on variable-size fields.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "biscotti/error.hpp"

namespace biscotti {

class ByteWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(v); }
  void u32(uint32_t v) { put_le(v, 4); }
  void u64(uint64_t v) { put_le(v, 8); }
  void i64(int64_t v) { put_le(uint64_t(v), 8); }
  void f64(double v) { put_le(std::bit_cast<uint64_t>(v), 8); }
  void raw(std::span<const uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void bytes(std::span<const uint8_t> b) {
    u32(uint32_t(b.size()));
    raw(b);
  }
  void str(const std::string& s) { bytes({reinterpret_cast<const uint8_t*>(s.data()), s.size()}); }

  const std::vector<uint8_t>& data() const { return buf_; }
  std::vector<uint8_t> take() { return std::move(buf_); }

 private:
  void put_le(uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(uint8_t(v >> (8 * i)));
  }
  std::vector<uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const uint8_t> in) : in_(in) {}

  uint8_t u8() { return uint8_t(get_le(1)); }
  uint32_t u32() { return uint32_t(get_le(4)); }
  uint64_t u64() { return get_le(8); }
  int64_t i64() { return int64_t(get_le(8)); }
  double f64() { return std::bit_cast<double>(get_le(8)); }

  std::span<const uint8_t> raw(std::size_t n) {
    need(n);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  template <std::size_t N>
  std::array<uint8_t, N> fixed() {
    std::array<uint8_t, N> a{};
    auto s = raw(N);
    std::memcpy(a.data(), s.data(), N);
    return a;
  }
  std::vector<uint8_t> bytes() {
    std::size_t n = u32();
    auto s = raw(n);
    return {s.begin(), s.end()};
  }
  std::string str() {
    auto b = bytes();
    return {b.begin(), b.end()};
  }

  /// Reads a count and rejects values that cannot fit in the remaining input.
  std::size_t count(std::size_t min_item_bytes) {
    std::size_t start = pos_;
    std::size_t n = u32();
    if (min_item_bytes && n > remaining() / min_item_bytes) throw ParseError("count exceeds input", start);
    return n;
  }

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return in_.size() - pos_; }
  bool done() const { return pos_ == in_.size(); }
  void expect_done() const {
    if (!done()) throw ParseError("trailing bytes", pos_);
  }
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(what, pos_); }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw ParseError("unexpected end of input", pos_);
  }
  uint64_t get_le(int n) {
    need(std::size_t(n));
    uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= uint64_t(in_[pos_ + std::size_t(i)]) << (8 * i);
    pos_ += std::size_t(n);
    return v;
  }

  std::span<const uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace biscotti
