#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "caafp/common.hpp"

// Little-endian binary stream helpers for the checkpoint and population file
// formats. Layouts written here are documented in the README; bump the format
// version constants there when anything changes.

namespace caafp::io {

class BinWriter {
 public:
  explicit BinWriter(std::ostream& os) : os_(os) {}

  void u8(std::uint8_t v) { raw(&v, 1); }
  void u32(std::uint32_t v) {
    std::uint8_t b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
    raw(b, 4);
  }
  void u64(std::uint64_t v) {
    std::uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
    raw(b, 8);
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

  void str(const std::string& s) {
    u64(s.size());
    raw(s.data(), s.size());
  }
  void vec_f64(const std::vector<double>& v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  void vec_i32(const std::vector<int>& v) {
    u64(v.size());
    for (int x : v) i32(x);
  }
  void vec_u8(const std::vector<std::uint8_t>& v) {
    u64(v.size());
    raw(v.data(), v.size());
  }

 private:
  void raw(const void* p, std::size_t n) {
    os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!os_) throw IoError("binary write failed");
  }
  std::ostream& os_;
};

class BinReader {
 public:
  explicit BinReader(std::istream& is) : is_(is) {}

  std::uint8_t u8() {
    std::uint8_t v;
    raw(&v, 1);
    return v;
  }
  std::uint32_t u32() {
    std::uint8_t b[4];
    raw(b, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint8_t b[8];
    raw(b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  float f32() { return std::bit_cast<float>(u32()); }

  std::string str() {
    std::string s(checked_count(u64(), 1), '\0');
    raw(s.data(), s.size());
    return s;
  }
  std::vector<double> vec_f64() {
    std::vector<double> v(checked_count(u64(), 8));
    for (double& x : v) x = f64();
    return v;
  }
  std::vector<int> vec_i32() {
    std::vector<int> v(checked_count(u64(), 4));
    for (int& x : v) x = i32();
    return v;
  }
  std::vector<std::uint8_t> vec_u8() {
    std::vector<std::uint8_t> v(checked_count(u64(), 1));
    raw(v.data(), v.size());
    return v;
  }

 private:
  // Guards against nonsense lengths from corrupt or truncated files.
  std::size_t checked_count(std::uint64_t n, std::size_t elem) {
    if (n > (1ULL << 33) / elem) throw IoError("binary read: implausible element count");
    return static_cast<std::size_t>(n);
  }
  void raw(void* p, std::size_t n) {
    is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n)
      throw IoError("binary read failed: truncated stream");
  }
  std::istream& is_;
};

}  // namespace caafp::io
