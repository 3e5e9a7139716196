#include "usbinject/packet.hpp"

#include <array>
#include <cstdio>

#include "usbinject/error.hpp"

namespace usbinject {
namespace {

// Reflected generator polynomials: x^5+x^2+1 -> 0x14, x^16+x^15+x^2+1 -> 0xA001.
constexpr std::uint8_t kCrc5Reflected = 0x14;
constexpr std::uint16_t kCrc16Reflected = 0xA001;

constexpr std::array<std::uint16_t, 256> make_crc16_table() {
  std::array<std::uint16_t, 256> table{};
  for (unsigned i = 0; i < 256; ++i) {
    std::uint16_t crc = static_cast<std::uint16_t>(i);
    for (int bit = 0; bit < 8; ++bit) {
      crc = (crc & 1u) ? static_cast<std::uint16_t>((crc >> 1) ^ kCrc16Reflected)
                       : static_cast<std::uint16_t>(crc >> 1);
    }
    table[i] = crc;
  }
  return table;
}

constexpr auto kCrc16Table = make_crc16_table();

constexpr std::uint8_t kErrByte = pid_byte_from_nibble(0b1100);

[[noreturn]] void fail(Errc code, const std::string& what) { throw UsbError(code, what); }

std::uint32_t split_field_bits(const SplitPacket& s) {
  const std::uint32_t sc = s.phase == SplitPhase::Complete ? 1u : 0u;
  const std::uint32_t low_speed = s.target_speed == Speed::Low ? 1u : 0u;
  std::uint32_t et = 0;
  switch (s.endpoint_type) {
    case EndpointType::Control: et = 0b00; break;
    case EndpointType::Bulk: et = 0b10; break;
    case EndpointType::Interrupt: et = 0b11; break;
  }
  return (s.hub_address & 0x7Fu) | (sc << 7) | ((s.port & 0x7Fu) << 8) | (low_speed << 15) |
         (et << 17);
}

void require_length(std::span<const std::uint8_t> bytes, std::size_t expected, PidKind pid) {
  if (bytes.size() < expected) {
    fail(Errc::TruncatedPacket, std::string(pid_name(pid)) + " needs " + std::to_string(expected) +
                                    " bytes, got " + std::to_string(bytes.size()));
  }
  if (bytes.size() > expected) {
    fail(Errc::MalformedPacket, std::string(pid_name(pid)) + " has trailing bytes");
  }
}

}  // namespace

std::uint8_t pid_nibble(PidKind kind) {
  switch (kind) {
    case PidKind::Out: return 0b0001;
    case PidKind::In: return 0b1001;
    case PidKind::Sof: return 0b0101;
    case PidKind::Setup: return 0b1101;
    case PidKind::Data0: return 0b0011;
    case PidKind::Data1: return 0b1011;
    case PidKind::Ack: return 0b0010;
    case PidKind::Nak: return 0b1010;
    case PidKind::Stall: return 0b1110;
    case PidKind::Nyet: return 0b0110;
    case PidKind::Pre: return 0b1100;
    case PidKind::Split: return 0b1000;
    case PidKind::Ping: return 0b0100;
  }
  return 0;
}

std::optional<PidKind> pid_from_nibble(std::uint8_t nibble) {
  for (PidKind kind : kAllPidKinds) {
    if (pid_nibble(kind) == (nibble & 0x0F)) return kind;
  }
  return std::nullopt;
}

std::uint8_t pid_to_byte(PidKind kind) { return pid_byte_from_nibble(pid_nibble(kind)); }

PidKind byte_to_pid(std::uint8_t byte) {
  const std::uint8_t nibble = byte & 0x0F;
  if (((~byte >> 4) & 0x0F) != nibble) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "0x%02x", byte);
    fail(Errc::CheckNibbleMismatch, buf);
  }
  auto kind = pid_from_nibble(nibble);
  if (!kind) fail(Errc::UnknownPid, "nibble " + std::to_string(nibble));
  return *kind;
}

std::string_view pid_name(PidKind kind) {
  switch (kind) {
    case PidKind::Out: return "OUT";
    case PidKind::In: return "IN";
    case PidKind::Sof: return "SOF";
    case PidKind::Setup: return "SETUP";
    case PidKind::Data0: return "DATA0";
    case PidKind::Data1: return "DATA1";
    case PidKind::Ack: return "ACK";
    case PidKind::Nak: return "NAK";
    case PidKind::Stall: return "STALL";
    case PidKind::Nyet: return "NYET";
    case PidKind::Pre: return "PRE";
    case PidKind::Split: return "SPLIT";
    case PidKind::Ping: return "PING";
  }
  return "?";
}

bool is_token_pid(PidKind kind) {
  return kind == PidKind::Out || kind == PidKind::In || kind == PidKind::Setup ||
         kind == PidKind::Ping;
}

bool is_data_pid(PidKind kind) { return kind == PidKind::Data0 || kind == PidKind::Data1; }

bool is_handshake_pid(PidKind kind) {
  return kind == PidKind::Ack || kind == PidKind::Nak || kind == PidKind::Stall ||
         kind == PidKind::Nyet;
}

std::uint8_t crc5_bits(std::uint32_t value, int nbits) {
  std::uint8_t crc = 0x1F;
  for (int i = 0; i < nbits; ++i) {
    const std::uint8_t bit = (value >> i) & 1u;
    crc = ((crc ^ bit) & 1u) ? static_cast<std::uint8_t>((crc >> 1) ^ kCrc5Reflected)
                             : static_cast<std::uint8_t>(crc >> 1);
  }
  return static_cast<std::uint8_t>(~crc & 0x1F);
}

std::uint8_t crc5(std::uint16_t bits11) { return crc5_bits(bits11 & 0x7FFu, 11); }

std::uint16_t crc16(std::span<const std::uint8_t> payload) {
  std::uint16_t crc = 0xFFFF;
  for (std::uint8_t byte : payload) {
    crc = static_cast<std::uint16_t>((crc >> 8) ^ kCrc16Table[(crc ^ byte) & 0xFF]);
  }
  return static_cast<std::uint16_t>(~crc);
}

std::string_view speed_name(Speed speed) {
  switch (speed) {
    case Speed::Low: return "LS";
    case Speed::Full: return "FS";
    case Speed::High: return "HS";
  }
  return "?";
}

std::optional<Speed> parse_speed(std::string_view text) {
  if (text == "LS") return Speed::Low;
  if (text == "FS") return Speed::Full;
  if (text == "HS") return Speed::High;
  return std::nullopt;
}

TokenPacket TokenPacket::make(PidKind pid, std::uint8_t address, std::uint8_t endpoint) {
  TokenPacket t;
  t.pid = pid;
  t.address = address & 0x7F;
  t.endpoint = endpoint & 0x0F;
  t.crc5 = usbinject::crc5(static_cast<std::uint16_t>(t.address | (t.endpoint << 7)));
  return t;
}

bool TokenPacket::crc_valid() const {
  return crc5 == usbinject::crc5(static_cast<std::uint16_t>(address | (endpoint << 7)));
}

DataPacket DataPacket::make(PidKind pid, std::vector<std::uint8_t> payload) {
  DataPacket d;
  d.pid = pid;
  d.crc16 = usbinject::crc16(payload);
  d.payload = std::move(payload);
  return d;
}

SplitPacket SplitPacket::make(SplitPhase phase, std::uint8_t hub_address, std::uint8_t port,
                              Speed target_speed, EndpointType endpoint_type) {
  SplitPacket s;
  s.phase = phase;
  s.hub_address = hub_address & 0x7F;
  s.port = port & 0x7F;
  s.target_speed = target_speed;
  s.endpoint_type = endpoint_type;
  s.crc5 = crc5_bits(split_field_bits(s), 19);
  return s;
}

SofPacket SofPacket::make(std::uint16_t frame_number) {
  SofPacket s;
  s.frame_number = frame_number & 0x7FF;
  s.crc5 = usbinject::crc5(s.frame_number);
  return s;
}

std::vector<std::uint8_t> encode(const PacketBody& body) {
  std::vector<std::uint8_t> out;
  std::visit(
      [&out](const auto& b) {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, TokenPacket>) {
          const std::uint16_t field = static_cast<std::uint16_t>(
              (b.address & 0x7F) | ((b.endpoint & 0x0F) << 7) | ((b.crc5 & 0x1F) << 11));
          out = {pid_to_byte(b.pid), static_cast<std::uint8_t>(field & 0xFF),
                 static_cast<std::uint8_t>(field >> 8)};
        } else if constexpr (std::is_same_v<T, DataPacket>) {
          out.reserve(b.payload.size() + 3);
          out.push_back(pid_to_byte(b.pid));
          out.insert(out.end(), b.payload.begin(), b.payload.end());
          out.push_back(static_cast<std::uint8_t>(b.crc16 & 0xFF));
          out.push_back(static_cast<std::uint8_t>(b.crc16 >> 8));
        } else if constexpr (std::is_same_v<T, HandshakePacket>) {
          out = {pid_to_byte(b.pid)};
        } else if constexpr (std::is_same_v<T, SplitPacket>) {
          const std::uint32_t field = split_field_bits(b) | (std::uint32_t{b.crc5 & 0x1Fu} << 19);
          out = {pid_to_byte(PidKind::Split), static_cast<std::uint8_t>(field & 0xFF),
                 static_cast<std::uint8_t>((field >> 8) & 0xFF),
                 static_cast<std::uint8_t>((field >> 16) & 0xFF)};
        } else if constexpr (std::is_same_v<T, SofPacket>) {
          const std::uint16_t field =
              static_cast<std::uint16_t>((b.frame_number & 0x7FF) | ((b.crc5 & 0x1F) << 11));
          out = {pid_to_byte(PidKind::Sof), static_cast<std::uint8_t>(field & 0xFF),
                 static_cast<std::uint8_t>(field >> 8)};
        } else {
          out = {kErrByte};
        }
      },
      body);
  return out;
}

PacketBody decode(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) fail(Errc::TruncatedPacket, "empty packet");
  const PidKind pid = byte_to_pid(bytes[0]);

  if (is_token_pid(pid)) {
    require_length(bytes, 3, pid);
    const std::uint16_t field = static_cast<std::uint16_t>(bytes[1] | (bytes[2] << 8));
    TokenPacket t;
    t.pid = pid;
    t.address = field & 0x7F;
    t.endpoint = (field >> 7) & 0x0F;
    t.crc5 = (field >> 11) & 0x1F;
    if (!t.crc_valid()) fail(Errc::Crc5Mismatch, "token");
    return t;
  }
  if (pid == PidKind::Sof) {
    require_length(bytes, 3, pid);
    const std::uint16_t field = static_cast<std::uint16_t>(bytes[1] | (bytes[2] << 8));
    SofPacket s;
    s.frame_number = field & 0x7FF;
    s.crc5 = (field >> 11) & 0x1F;
    if (s.crc5 != crc5(s.frame_number)) fail(Errc::Crc5Mismatch, "SOF");
    return s;
  }
  if (is_data_pid(pid)) {
    if (bytes.size() < 3) fail(Errc::TruncatedPacket, "data packet shorter than PID+CRC16");
    if (bytes.size() - 3 > kMaxDataPayload) fail(Errc::MalformedPacket, "payload exceeds 1023");
    DataPacket d;
    d.pid = pid;
    d.payload.assign(bytes.begin() + 1, bytes.end() - 2);
    d.crc16 = static_cast<std::uint16_t>(bytes[bytes.size() - 2] | (bytes.back() << 8));
    if (d.crc16 != crc16(d.payload)) fail(Errc::Crc16Mismatch, "data payload");
    return d;
  }
  if (is_handshake_pid(pid)) {
    require_length(bytes, 1, pid);
    return HandshakePacket{pid};
  }
  if (pid == PidKind::Pre) {
    require_length(bytes, 1, pid);
    return GarbleIndication{};
  }
  // SPLIT
  require_length(bytes, 4, pid);
  const std::uint32_t field =
      bytes[1] | (std::uint32_t{bytes[2]} << 8) | (std::uint32_t{bytes[3]} << 16);
  SplitPacket s;
  s.hub_address = field & 0x7F;
  s.phase = ((field >> 7) & 1u) ? SplitPhase::Complete : SplitPhase::Start;
  s.port = (field >> 8) & 0x7F;
  s.target_speed = ((field >> 15) & 1u) ? Speed::Low : Speed::Full;
  if ((field >> 16) & 1u) fail(Errc::MalformedPacket, "SPLIT E bit set");
  switch ((field >> 17) & 0b11) {
    case 0b00: s.endpoint_type = EndpointType::Control; break;
    case 0b10: s.endpoint_type = EndpointType::Bulk; break;
    case 0b11: s.endpoint_type = EndpointType::Interrupt; break;
    default: fail(Errc::MalformedPacket, "isochronous SPLIT not modeled");
  }
  s.crc5 = (field >> 19) & 0x1F;
  if (s.crc5 != crc5_bits(field & 0x7FFFF, 19)) fail(Errc::Crc5Mismatch, "SPLIT");
  return s;
}

std::size_t wire_length(const PacketBody& body) {
  return std::visit(
      [](const auto& b) -> std::size_t {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, DataPacket>) return b.payload.size() + 3;
        else if constexpr (std::is_same_v<T, TokenPacket> || std::is_same_v<T, SofPacket>) return 3;
        else if constexpr (std::is_same_v<T, SplitPacket>) return 4;
        else return 1;
      },
      body);
}

std::string hex_dump(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 3);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    if (i) out.push_back(' ');
    out.push_back(kDigits[bytes[i] >> 4]);
    out.push_back(kDigits[bytes[i] & 0x0F]);
  }
  return out;
}

std::optional<std::vector<std::uint8_t>> parse_hex_dump(std::string_view text) {
  auto digit = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;
  };
  std::vector<std::uint8_t> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (i + 1 >= text.size()) return std::nullopt;
    const int hi = digit(text[i]);
    const int lo = digit(text[i + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    out.push_back(static_cast<std::uint8_t>(hi << 4 | lo));
    i += 2;
    if (i < text.size()) {
      if (text[i] != ' ' || i + 1 == text.size()) return std::nullopt;
      ++i;
    }
  }
  return out;
}

std::optional<PidKind> body_pid(const PacketBody& body) {
  return std::visit(
      [](const auto& b) -> std::optional<PidKind> {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, TokenPacket> || std::is_same_v<T, DataPacket> ||
                      std::is_same_v<T, HandshakePacket>)
          return b.pid;
        else if constexpr (std::is_same_v<T, SplitPacket>) return PidKind::Split;
        else if constexpr (std::is_same_v<T, SofPacket>) return PidKind::Sof;
        else return std::nullopt;
      },
      body);
}

std::string describe(const PacketBody& body) {
  return std::visit(
      [](const auto& b) -> std::string {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, TokenPacket>) {
          return std::string(pid_name(b.pid)) + " addr=" + std::to_string(b.address) +
                 " ep=" + std::to_string(b.endpoint);
        } else if constexpr (std::is_same_v<T, DataPacket>) {
          return std::string(pid_name(b.pid)) + " len=" + std::to_string(b.payload.size());
        } else if constexpr (std::is_same_v<T, HandshakePacket>) {
          return std::string(pid_name(b.pid));
        } else if constexpr (std::is_same_v<T, SplitPacket>) {
          return std::string(b.phase == SplitPhase::Start ? "SSPLIT" : "CSPLIT") +
                 " hub=" + std::to_string(b.hub_address) + " port=" + std::to_string(b.port);
        } else if constexpr (std::is_same_v<T, SofPacket>) {
          return "SOF frame=" + std::to_string(b.frame_number);
        } else {
          return "GARBLE";
        }
      },
      body);
}

}  // namespace usbinject
