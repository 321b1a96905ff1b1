#pragma once

#include <array>
#include <cstdint>
#include <charconv>
#include <string>

#include "fedsim/errors.hpp"

namespace fedsim {

/// Shortest decimal string that reparses to exactly the same double.
/// Deterministic, so emitted files are byte-stable across reruns.
inline std::string format_double(double v) {
  std::array<char, 40> buf;
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (res.ec != std::errc{}) throw Error("to_chars failed");
  return std::string(buf.data(), res.ptr);
}

inline std::string format_hex_u64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s = "0x";
  for (int shift = 60; shift >= 0; shift -= 4)
    s += digits[(v >> shift) & 0xf];
  return s;
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, v);
  if (res.ec != std::errc{} || res.ptr != end)
    throw SchemaError("not a number: '" + s + "'");
  return v;
}

}  // namespace fedsim
