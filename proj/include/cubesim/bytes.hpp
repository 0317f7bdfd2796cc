#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cubesim {

using Bytes = std::vector<std::uint8_t>;

inline void put_u16be(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
}

inline void put_i16be(Bytes& out, std::int16_t v) { put_u16be(out, static_cast<std::uint16_t>(v)); }

inline void put_u32be(Bytes& out, std::uint32_t v) {
  put_u16be(out, static_cast<std::uint16_t>(v >> 16));
  put_u16be(out, static_cast<std::uint16_t>(v & 0xFFFF));
}

inline std::uint16_t get_u16be(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>((b[at] << 8) | b[at + 1]);
}

inline std::int16_t get_i16be(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::int16_t>(get_u16be(b, at));
}

inline std::uint32_t get_u32be(std::span<const std::uint8_t> b, std::size_t at) {
  return (static_cast<std::uint32_t>(get_u16be(b, at)) << 16) | get_u16be(b, at + 2);
}

inline std::string to_hex(std::span<const std::uint8_t> b) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s;
  s.reserve(b.size() * 2);
  for (auto v : b) {
    s.push_back(kDigits[v >> 4]);
    s.push_back(kDigits[v & 0xF]);
  }
  return s;
}

}  // namespace cubesim
