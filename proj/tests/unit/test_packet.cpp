#include <gtest/gtest.h>

#include <random>

#include "oracle.hpp"
#include "usbinject/error.hpp"
#include "usbinject/packet.hpp"
#include "usbinject/sim.hpp"

using namespace usbinject;

namespace {

std::vector<std::uint8_t> random_bytes(std::mt19937_64& rng, std::size_t n) {
  std::vector<std::uint8_t> out(n);
  for (auto& b : out) b = static_cast<std::uint8_t>(rng());
  return out;
}

PacketBody random_body(std::mt19937_64& rng) {
  auto pick = [&rng](auto lo, auto hi) {
    return std::uniform_int_distribution<long long>(lo, hi)(rng);
  };
  switch (pick(0, 5)) {
    case 0: {
      constexpr PidKind kTokens[] = {PidKind::Out, PidKind::In, PidKind::Setup, PidKind::Ping};
      return TokenPacket::make(kTokens[pick(0, 3)], static_cast<std::uint8_t>(pick(0, 127)),
                               static_cast<std::uint8_t>(pick(0, 15)));
    }
    case 1: {
      const std::size_t len = pick(0, 9) == 0 ? pick(0, 1023) : pick(0, 64);
      return DataPacket::make(pick(0, 1) ? PidKind::Data1 : PidKind::Data0, random_bytes(rng, len));
    }
    case 2: {
      constexpr PidKind kHs[] = {PidKind::Ack, PidKind::Nak, PidKind::Stall, PidKind::Nyet};
      return HandshakePacket{kHs[pick(0, 3)]};
    }
    case 3:
      return SplitPacket::make(pick(0, 1) ? SplitPhase::Complete : SplitPhase::Start,
                               static_cast<std::uint8_t>(pick(1, 127)),
                               static_cast<std::uint8_t>(pick(1, 127)),
                               pick(0, 1) ? Speed::Low : Speed::Full,
                               static_cast<EndpointType>(pick(0, 2)));
    case 4:
      return SofPacket::make(static_cast<std::uint16_t>(pick(0, 2047)));
    default:
      return GarbleIndication{};
  }
}

oracle::Bits slice(const oracle::Bits& bits, std::size_t from, std::size_t to) {
  return {bits.begin() + static_cast<std::ptrdiff_t>(from),
          bits.begin() + static_cast<std::ptrdiff_t>(to)};
}

}  // namespace

TEST(Codec, KnownVectors) {
  EXPECT_EQ(crc5(0), 0x02);
  const auto in = encode(TokenPacket::make(PidKind::In, 3, 1));
  EXPECT_EQ(in, (std::vector<std::uint8_t>{0x69, 0x83, 0xE0}));
  const std::vector<std::uint8_t> payload{0, 1, 2, 3};
  EXPECT_EQ(crc16(payload), 0x7AEF);
  EXPECT_EQ(encode(HandshakePacket{PidKind::Ack}), (std::vector<std::uint8_t>{0xD2}));
  EXPECT_EQ(encode(GarbleIndication{}), (std::vector<std::uint8_t>{0x3C}));
}

TEST(Codec, PidBytesCarryComplementNibble) {
  for (PidKind k : kAllPidKinds) {
    const std::uint8_t b = pid_to_byte(k);
    EXPECT_EQ((b >> 4) ^ (b & 0x0F), 0x0F) << pid_name(k);
    EXPECT_EQ(byte_to_pid(b), k);
  }
}

TEST(Codec, EverySingleBitPidCorruptionIsDetected) {
  for (PidKind k : kAllPidKinds) {
    for (int bit = 0; bit < 8; ++bit) {
      const auto flipped = static_cast<std::uint8_t>(pid_to_byte(k) ^ (1u << bit));
      try {
        byte_to_pid(flipped);
        ADD_FAILURE() << pid_name(k) << " bit " << bit << " accepted";
      } catch (const UsbError& e) {
        EXPECT_EQ(e.code(), Errc::CheckNibbleMismatch);
      }
    }
  }
}

TEST(Codec, CorruptedPidInsidePacketIsRejected) {
  std::vector<std::uint8_t> bytes = encode(DataPacket::make(PidKind::Data0, {1, 2, 3}));
  for (int bit = 0; bit < 8; ++bit) {
    auto copy = bytes;
    copy[0] ^= static_cast<std::uint8_t>(1u << bit);
    EXPECT_THROW(decode(copy), UsbError);
  }
}

TEST(Codec, RoundTripTenThousandRandomPackets) {
  std::mt19937_64 rng(0xC0DEC);
  for (int i = 0; i < 10'000; ++i) {
    const PacketBody body = random_body(rng);
    const auto bytes = encode(body);
    ASSERT_EQ(bytes.size(), wire_length(body));
    ASSERT_EQ(decode(bytes), body) << describe(body);
  }
}

TEST(Codec, TokenCrcMatchesBitSerialOracle) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    const auto addr = static_cast<std::uint8_t>(rng() & 0x7F);
    const auto ep = static_cast<std::uint8_t>(rng() & 0x0F);
    const auto wire = oracle::wire_bits(encode(TokenPacket::make(PidKind::Out, addr, ep)));
    const oracle::Bits field = slice(wire, 8, 19);
    ASSERT_EQ(field, oracle::field_bits(addr | (ep << 7), 11));
    ASSERT_EQ(slice(wire, 19, 24), oracle::crc5_wire(field)) << int(addr) << "/" << int(ep);
    ASSERT_EQ(oracle::divide(slice(wire, 8, 24), 5, oracle::kCrc5Poly), oracle::kCrc5Residual);
  }
}

TEST(Codec, SofAndSplitCrcMatchOracle) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 1000; ++i) {
    const auto frame = static_cast<std::uint16_t>(rng() & 0x7FF);
    const auto sof = oracle::wire_bits(encode(SofPacket::make(frame)));
    ASSERT_EQ(slice(sof, 19, 24), oracle::crc5_wire(slice(sof, 8, 19)));

    const auto split = encode(SplitPacket::make(SplitPhase::Start, static_cast<std::uint8_t>(1 + rng() % 127),
                                                static_cast<std::uint8_t>(1 + rng() % 127),
                                                Speed::Low, EndpointType::Interrupt));
    const auto sbits = oracle::wire_bits(split);
    ASSERT_EQ(slice(sbits, 27, 32), oracle::crc5_wire(slice(sbits, 8, 27)));
  }
}

TEST(Codec, ArbitraryWidthCrc5MatchesOracle) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 1000; ++i) {
    const int n = 1 + static_cast<int>(rng() % 32);
    const auto value = static_cast<std::uint32_t>(rng()) & (n == 32 ? 0xFFFFFFFFu : ((1u << n) - 1));
    const std::uint8_t crc = crc5_bits(value, n);
    // The codec keeps the CRC in wire order: bit 0 goes out first.
    ASSERT_EQ(oracle::field_bits(crc, 5), oracle::crc5_wire(oracle::field_bits(value, n)));
  }
}

TEST(Codec, DataCrcMatchesBitSerialOracle) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 1000; ++i) {
    const auto payload = random_bytes(rng, rng() % 80);
    const auto bytes = encode(DataPacket::make(PidKind::Data1, payload));
    const auto wire = oracle::wire_bits(bytes);
    const oracle::Bits field = slice(wire, 8, 8 + payload.size() * 8);
    ASSERT_EQ(slice(wire, 8 + payload.size() * 8, wire.size()), oracle::crc16_wire(field));
    ASSERT_EQ(oracle::divide(slice(wire, 8, wire.size()), 16, oracle::kCrc16Poly),
              oracle::kCrc16Residual);
  }
}

TEST(Codec, CorruptedFieldsAreRejectedWithTheRightError) {
  auto code_of = [](const std::vector<std::uint8_t>& bytes) {
    try {
      decode(bytes);
    } catch (const UsbError& e) {
      return std::optional<Errc>(e.code());
    }
    return std::optional<Errc>();
  };
  const auto token = encode(TokenPacket::make(PidKind::In, 9, 2));
  for (std::size_t i = 1; i < token.size(); ++i) {
    for (int bit = 0; bit < 8; ++bit) {
      auto copy = token;
      copy[i] ^= static_cast<std::uint8_t>(1u << bit);
      EXPECT_EQ(code_of(copy), Errc::Crc5Mismatch);
    }
  }
  const auto data = encode(DataPacket::make(PidKind::Data0, {1, 2, 3, 4, 5}));
  for (std::size_t i = 1; i < data.size(); ++i) {
    auto copy = data;
    copy[i] ^= 0x10;
    EXPECT_EQ(code_of(copy), Errc::Crc16Mismatch);
  }
  EXPECT_EQ(code_of({}), Errc::TruncatedPacket);
  EXPECT_EQ(code_of({token[0], token[1]}), Errc::TruncatedPacket);
  EXPECT_EQ(code_of({0xD2, 0x00}), Errc::MalformedPacket);
}

TEST(Codec, HexDumpRoundTrip) {
  const std::vector<std::uint8_t> bytes{0x00, 0x69, 0xff, 0x3c};
  EXPECT_EQ(hex_dump(bytes), "00 69 ff 3c");
  EXPECT_EQ(parse_hex_dump("00 69 ff 3c"), bytes);
  EXPECT_FALSE(parse_hex_dump("0g"));
  EXPECT_FALSE(parse_hex_dump("123"));
}

TEST(Timing, WireDurationRoundsUpWholeBits) {
  EXPECT_EQ(wire_duration(Speed::Low, 1), SimTime{5334});
  EXPECT_EQ(wire_duration(Speed::Full, 1), SimTime{667});
  EXPECT_EQ(wire_duration(Speed::High, 1), SimTime{17});
  EXPECT_EQ(wire_duration(Speed::High, 3), SimTime{50});
  EXPECT_EQ(wire_duration(Speed::Full, 3), SimTime{2000});
  EXPECT_EQ(response_timeout(Speed::Full), 16 * SimTime{667} + SimTime{50'000});
}
