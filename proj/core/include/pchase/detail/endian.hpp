#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <type_traits>

namespace pchase::detail {

template <typename T>
  requires std::is_unsigned_v<T>
void put_le(std::span<std::uint8_t> out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

template <typename T>
  requires std::is_unsigned_v<T>
T get_le(std::span<const std::uint8_t> in) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(in[i]) << (8 * i);
  return v;
}

/// Little-endian load of `width` (<= 8) bytes, zero-extended.
inline std::uint64_t load_word(const std::uint8_t* p, std::size_t width) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

inline void store_word(std::uint8_t* p, std::uint64_t v, std::size_t width) {
  for (std::size_t i = 0; i < width; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

}  // namespace pchase::detail
