#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

namespace ftl::binary {

// Explicit little-endian encoding independent of host byte order.

template <class UInt>
void write_le(std::ostream& os, UInt value) {
  char bytes[sizeof(UInt)];
  for (std::size_t i = 0; i < sizeof(UInt); ++i)
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  os.write(bytes, sizeof(UInt));
}

template <class UInt>
bool read_le(std::istream& is, UInt& value) {
  unsigned char bytes[sizeof(UInt)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(UInt))) return false;
  value = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) value |= static_cast<UInt>(bytes[i]) << (8 * i);
  return true;
}

inline void write_f64(std::ostream& os, double value) {
  write_le(os, std::bit_cast<std::uint64_t>(value));
}

inline bool read_f64(std::istream& is, double& value) {
  std::uint64_t bits;
  if (!read_le(is, bits)) return false;
  value = std::bit_cast<double>(bits);
  return true;
}

}  // namespace ftl::binary
