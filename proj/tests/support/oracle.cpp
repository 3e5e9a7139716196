#include "oracle.hpp"

namespace usbinject::oracle {

Bits wire_bits(std::span<const std::uint8_t> bytes) {
  Bits out;
  for (std::uint8_t b : bytes) {
    for (int i = 0; i < 8; ++i) out.push_back(((b >> i) & 1) != 0);
  }
  return out;
}

Bits field_bits(std::uint32_t value, int n) {
  Bits out;
  for (int i = 0; i < n; ++i) out.push_back(((value >> i) & 1) != 0);
  return out;
}

std::uint32_t divide(const Bits& bits, int width, std::uint32_t poly) {
  const std::uint32_t mask = (1u << width) - 1;
  std::uint32_t reg = mask;
  for (bool b : bits) {
    const bool feedback = (((reg >> (width - 1)) & 1) != 0) != b;
    reg = (reg << 1) & mask;
    if (feedback) reg ^= poly;
  }
  return reg;
}

namespace {

Bits crc_wire(const Bits& field, int width, std::uint32_t poly) {
  const std::uint32_t crc = ~divide(field, width, poly) & ((1u << width) - 1);
  Bits out;
  for (int i = width - 1; i >= 0; --i) out.push_back(((crc >> i) & 1) != 0);
  return out;
}

}  // namespace

Bits crc5_wire(const Bits& field) { return crc_wire(field, 5, kCrc5Poly); }
Bits crc16_wire(const Bits& field) { return crc_wire(field, 16, kCrc16Poly); }

}  // namespace usbinject::oracle
