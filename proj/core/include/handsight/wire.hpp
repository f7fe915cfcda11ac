// Copyright (c) 2026 the handsight authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace handsight::wire {

// All on-disk integers and floats are little-endian.

inline void put_bytes(std::ostream& os, const void* p, size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void put_le(std::ostream& os, T v) {
  static_assert(std::is_integral_v<T>);
  uint8_t buf[sizeof(T)];
  auto u = static_cast<std::make_unsigned_t<T>>(v);
  for (size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<uint8_t>(u >> (8 * i));
  put_bytes(os, buf, sizeof(T));
}

inline void put_f32(std::ostream& os, float v) {
  uint32_t u;
  std::memcpy(&u, &v, 4);
  put_le<uint32_t>(os, u);
}

inline void put_f64(std::ostream& os, double v) {
  uint64_t u;
  std::memcpy(&u, &v, 8);
  put_le<uint64_t>(os, u);
}

inline void get_bytes(std::istream& is, void* p, size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!is) throw std::runtime_error("wire: truncated input");
}

template <typename T>
T get_le(std::istream& is) {
  static_assert(std::is_integral_v<T>);
  uint8_t buf[sizeof(T)];
  get_bytes(is, buf, sizeof(T));
  std::make_unsigned_t<T> u = 0;
  for (size_t i = 0; i < sizeof(T); ++i)
    u |= static_cast<std::make_unsigned_t<T>>(buf[i]) << (8 * i);
  return static_cast<T>(u);
}

inline float get_f32(std::istream& is) {
  uint32_t u = get_le<uint32_t>(is);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

inline double get_f64(std::istream& is) {
  uint64_t u = get_le<uint64_t>(is);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

inline void put_magic(std::ostream& os, const char magic[4]) {
  put_bytes(os, magic, 4);
}

inline void expect_magic(std::istream& is, const char magic[4], const char* what) {
  char buf[4];
  get_bytes(is, buf, 4);
  if (std::memcmp(buf, magic, 4) != 0)
    throw std::runtime_error(std::string("bad magic for ") + what);
}

}  // namespace handsight::wire
