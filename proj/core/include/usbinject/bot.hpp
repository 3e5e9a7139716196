#pragma once

// Mass-storage bulk-only transport framing.
//
//   CBW (31 bytes, little-endian): 'USBC' | tag | dataTransferLength | flags |
//                                  lun | cbLength | CB[16]
//   CSW (13 bytes):                'USBS' | tag | residue | status
//
// READ(10) CDB: 0x28, flags, LBA (4 bytes big-endian), group, length in blocks
// (2 bytes big-endian), control.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace usbinject {

inline constexpr std::uint32_t kCbwSignature = 0x43425355;  // "USBC"
inline constexpr std::uint32_t kCswSignature = 0x53425355;  // "USBS"
inline constexpr std::size_t kCbwLength = 31;
inline constexpr std::size_t kCswLength = 13;
inline constexpr std::size_t kBlockSize = 512;

inline constexpr std::uint8_t kOpTestUnitReady = 0x00;
inline constexpr std::uint8_t kOpRead10 = 0x28;

struct Cbw {
  std::uint32_t tag = 0;
  std::uint32_t data_transfer_length = 0;
  std::uint8_t flags = 0;
  std::uint8_t lun = 0;
  std::uint8_t cb_length = 0;
  std::array<std::uint8_t, 16> cb{};

  std::uint8_t opcode() const { return cb[0]; }
  std::uint32_t read10_lba() const;
  std::uint16_t read10_blocks() const;
  bool operator==(const Cbw&) const = default;
};

struct Csw {
  std::uint32_t tag = 0;
  std::uint32_t residue = 0;
  std::uint8_t status = 0;
  bool operator==(const Csw&) const = default;
};

std::vector<std::uint8_t> encode_cbw(const Cbw& cbw);
/// Throws UsbError(MalformedCbw) on bad length or signature.
Cbw parse_cbw(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_csw(const Csw& csw);
std::optional<Csw> parse_csw(std::span<const std::uint8_t> bytes);

Cbw make_read10(std::uint32_t tag, std::uint32_t lba, std::uint32_t length_bytes);
Cbw make_test_unit_ready(std::uint32_t tag);

}  // namespace usbinject
