#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>

#include "afflab/error.hpp"

namespace afflab {

/// Little-endian writer over a std::ostream.
class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}

  void magic(std::string_view tag) { bytes(std::as_bytes(std::span(tag.data(), tag.size()))); }

  void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }

  void u32(std::uint32_t v) {
    std::array<char, 4> b;
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
    out_.write(b.data(), b.size());
  }

  void u64(std::uint64_t v) {
    std::array<char, 8> b;
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
    out_.write(b.data(), b.size());
  }

  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

  void f32s(std::span<const float> values) {
    for (float v : values) f32(v);
  }

  void bytes(std::span<const std::byte> data) {
    out_.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  }

  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(std::as_bytes(std::span(s.data(), s.size())));
  }

 private:
  std::ostream& out_;
};

/// Little-endian reader; any short read raises Error(on_truncation).
class BinaryReader {
 public:
  BinaryReader(std::istream& in, ErrorCode on_truncation) : in_(in), code_(on_truncation) {}

  void expect_magic(std::string_view tag) {
    std::string got(tag.size(), '\0');
    read(got.data(), got.size());
    if (got != tag) throw Error(code_, "bad magic, expected " + std::string(tag));
  }

  std::uint8_t u8() {
    char c;
    read(&c, 1);
    return static_cast<std::uint8_t>(c);
  }

  std::uint32_t u32() {
    std::array<unsigned char, 4> b;
    read(reinterpret_cast<char*>(b.data()), b.size());
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }

  std::uint64_t u64() {
    std::array<unsigned char, 8> b;
    read(reinterpret_cast<char*>(b.data()), b.size());
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }

  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }

  void f32s(std::span<float> values) {
    for (float& v : values) v = f32();
  }

  std::string str(std::size_t max_len = 1u << 16) {
    const std::uint32_t n = u32();
    if (n > max_len) throw Error(code_, "string length out of range");
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }

  void read(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw Error(code_, "truncated input");
  }

  ErrorCode error_code() const noexcept { return code_; }

 private:
  std::istream& in_;
  ErrorCode code_;
};

}  // namespace afflab
