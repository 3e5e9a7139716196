#pragma once

// Reference CRCs computed the slow way: a shift register clocked once per wire
// bit, MSB-first polynomials, no tables and no bit reflection. Shares no code
// with the codec.

#include <cstdint>
#include <span>
#include <vector>

namespace usbinject::oracle {

using Bits = std::vector<bool>;

inline constexpr std::uint32_t kCrc5Poly = 0x05;     // x^5 + x^2 + 1
inline constexpr std::uint32_t kCrc16Poly = 0x8005;  // x^16 + x^15 + x^2 + 1
// Register contents after clocking a correct field followed by its CRC.
inline constexpr std::uint32_t kCrc5Residual = 0b01100;
inline constexpr std::uint32_t kCrc16Residual = 0x800D;

/// Bits of each byte, least significant first, in byte order.
Bits wire_bits(std::span<const std::uint8_t> bytes);
/// The low n bits of value, least significant first.
Bits field_bits(std::uint32_t value, int n);

/// Register after clocking bits through a width-bit divider seeded with ones.
std::uint32_t divide(const Bits& bits, int width, std::uint32_t poly);

/// CRC bits as they follow the field on the wire (complemented, MSB first).
Bits crc5_wire(const Bits& field);
Bits crc16_wire(const Bits& field);

}  // namespace usbinject::oracle
