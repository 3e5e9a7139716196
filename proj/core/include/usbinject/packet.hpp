#pragma once

// Packet-layer model of the USB 1.x/2.0 transaction protocol.
//
// Wire images omit SYNC and EOP. A token image is
//
//   PID | addr[6:0] ep[3:0] crc5[4:0]      (16 bits, least-significant bit first)
//
// and a data image is PID | payload | crc16 (little-endian). The PID byte carries
// the 4-bit code in its low nibble and the complement of that code in its high
// nibble.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace usbinject {

enum class PidKind : std::uint8_t {
  Out,
  In,
  Sof,
  Setup,
  Data0,
  Data1,
  Ack,
  Nak,
  Stall,
  Nyet,
  Pre,
  Split,
  Ping,
};

inline constexpr PidKind kAllPidKinds[] = {
    PidKind::Out,   PidKind::In,   PidKind::Sof,  PidKind::Setup, PidKind::Data0,
    PidKind::Data1, PidKind::Ack,  PidKind::Nak,  PidKind::Stall, PidKind::Nyet,
    PidKind::Pre,   PidKind::Split, PidKind::Ping,
};

std::uint8_t pid_nibble(PidKind kind);
std::optional<PidKind> pid_from_nibble(std::uint8_t nibble);

/// Frames a raw 4-bit code: nibble in the low half, its complement in the high half.
constexpr std::uint8_t pid_byte_from_nibble(std::uint8_t nibble) {
  return static_cast<std::uint8_t>((nibble & 0x0F) | ((~nibble & 0x0F) << 4));
}

std::uint8_t pid_to_byte(PidKind kind);

/// Throws UsbError(CheckNibbleMismatch) or UsbError(UnknownPid).
PidKind byte_to_pid(std::uint8_t byte);

std::string_view pid_name(PidKind kind);

bool is_token_pid(PidKind kind);      // OUT, IN, SETUP, PING
bool is_data_pid(PidKind kind);       // DATA0, DATA1
bool is_handshake_pid(PidKind kind);  // ACK, NAK, STALL, NYET

// CRC5 over the 11-bit address+endpoint field (address in bits 0..6).
std::uint8_t crc5(std::uint16_t bits11);
// CRC5 over an arbitrary-width field sent least-significant bit first.
std::uint8_t crc5_bits(std::uint32_t value, int nbits);
std::uint16_t crc16(std::span<const std::uint8_t> payload);

enum class Speed : std::uint8_t { Low, Full, High };

std::string_view speed_name(Speed speed);
std::optional<Speed> parse_speed(std::string_view text);
inline bool is_classic(Speed speed) { return speed != Speed::High; }

inline constexpr std::size_t kMaxDataPayload = 1023;
inline constexpr std::size_t kHighSpeedBulkMaxPacket = 512;

struct TokenPacket {
  PidKind pid = PidKind::In;
  std::uint8_t address = 0;
  std::uint8_t endpoint = 0;
  std::uint8_t crc5 = 0;

  static TokenPacket make(PidKind pid, std::uint8_t address, std::uint8_t endpoint);
  bool crc_valid() const;
  bool operator==(const TokenPacket&) const = default;
};

struct DataPacket {
  PidKind pid = PidKind::Data0;
  std::vector<std::uint8_t> payload;
  std::uint16_t crc16 = 0;

  static DataPacket make(PidKind pid, std::vector<std::uint8_t> payload);
  bool operator==(const DataPacket&) const = default;
};

struct HandshakePacket {
  PidKind pid = PidKind::Ack;
  bool operator==(const HandshakePacket&) const = default;
};

enum class SplitPhase : std::uint8_t { Start, Complete };
enum class EndpointType : std::uint8_t { Control, Interrupt, Bulk };

struct SplitPacket {
  SplitPhase phase = SplitPhase::Start;
  std::uint8_t hub_address = 0;
  std::uint8_t port = 1;
  Speed target_speed = Speed::Full;  // Low or Full
  EndpointType endpoint_type = EndpointType::Interrupt;
  std::uint8_t crc5 = 0;

  static SplitPacket make(SplitPhase phase, std::uint8_t hub_address, std::uint8_t port,
                          Speed target_speed, EndpointType endpoint_type);
  bool operator==(const SplitPacket&) const = default;
};

struct SofPacket {
  std::uint16_t frame_number = 0;
  std::uint8_t crc5 = 0;

  static SofPacket make(std::uint16_t frame_number);
  bool operator==(const SofPacket&) const = default;
};

/// A hub's upstream error signal after detecting colliding transmissions. On a
/// complete-split it is the SPLIT-ERR answer. Encoded as the ERR handshake byte.
struct GarbleIndication {
  bool operator==(const GarbleIndication&) const = default;
};

using PacketBody =
    std::variant<TokenPacket, DataPacket, HandshakePacket, SplitPacket, SofPacket, GarbleIndication>;

std::vector<std::uint8_t> encode(const PacketBody& body);

/// Throws UsbError with one of CheckNibbleMismatch, UnknownPid, Crc5Mismatch,
/// Crc16Mismatch, TruncatedPacket, MalformedPacket.
PacketBody decode(std::span<const std::uint8_t> bytes);

std::size_t wire_length(const PacketBody& body);

/// Two lowercase hex digits per byte, space separated.
std::string hex_dump(std::span<const std::uint8_t> bytes);
std::optional<std::vector<std::uint8_t>> parse_hex_dump(std::string_view text);

/// Short human-readable summary, e.g. "IN addr=3 ep=1".
std::string describe(const PacketBody& body);

/// PID of a body, or nullopt for a garble indication.
std::optional<PidKind> body_pid(const PacketBody& body);

template <class T>
const T* as(const PacketBody& body) {
  return std::get_if<T>(&body);
}

inline bool is_handshake(const PacketBody& body, PidKind pid) {
  const auto* h = std::get_if<HandshakePacket>(&body);
  return h != nullptr && h->pid == pid;
}

/// Opaque identifier of the node that originated a transmission. Simulator-internal:
/// it never appears in a wire image and protocol logic must not branch on it.
struct Provenance {
  std::uint32_t node = 0xFFFFFFFFu;
  bool operator==(const Provenance&) const = default;
};

struct Packet {
  PacketBody body;
  Speed speed = Speed::High;
  Provenance provenance;
  std::int64_t timestamp_ns = 0;
};

}  // namespace usbinject
