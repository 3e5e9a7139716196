#include "usbinject/bot.hpp"

#include <algorithm>

#include "usbinject/error.hpp"

namespace usbinject {
namespace {

void put_le32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_le32(std::span<const std::uint8_t> b, std::size_t at) {
  return b[at] | (b[at + 1] << 8) | (b[at + 2] << 16) | (std::uint32_t{b[at + 3]} << 24);
}

}  // namespace

std::uint32_t Cbw::read10_lba() const {
  return (std::uint32_t{cb[2]} << 24) | (cb[3] << 16) | (cb[4] << 8) | cb[5];
}

std::uint16_t Cbw::read10_blocks() const { return static_cast<std::uint16_t>((cb[7] << 8) | cb[8]); }

std::vector<std::uint8_t> encode_cbw(const Cbw& cbw) {
  std::vector<std::uint8_t> out;
  out.reserve(kCbwLength);
  put_le32(out, kCbwSignature);
  put_le32(out, cbw.tag);
  put_le32(out, cbw.data_transfer_length);
  out.push_back(cbw.flags);
  out.push_back(cbw.lun);
  out.push_back(cbw.cb_length);
  out.insert(out.end(), cbw.cb.begin(), cbw.cb.end());
  return out;
}

Cbw parse_cbw(std::span<const std::uint8_t> bytes) {
  if (bytes.size() != kCbwLength) {
    throw UsbError(Errc::MalformedCbw, "length " + std::to_string(bytes.size()));
  }
  if (get_le32(bytes, 0) != kCbwSignature) throw UsbError(Errc::MalformedCbw, "bad signature");
  Cbw cbw;
  cbw.tag = get_le32(bytes, 4);
  cbw.data_transfer_length = get_le32(bytes, 8);
  cbw.flags = bytes[12];
  cbw.lun = bytes[13];
  cbw.cb_length = bytes[14];
  if (cbw.cb_length < 1 || cbw.cb_length > 16) throw UsbError(Errc::MalformedCbw, "bad CB length");
  std::copy(bytes.begin() + 15, bytes.end(), cbw.cb.begin());
  return cbw;
}

std::vector<std::uint8_t> encode_csw(const Csw& csw) {
  std::vector<std::uint8_t> out;
  out.reserve(kCswLength);
  put_le32(out, kCswSignature);
  put_le32(out, csw.tag);
  put_le32(out, csw.residue);
  out.push_back(csw.status);
  return out;
}

std::optional<Csw> parse_csw(std::span<const std::uint8_t> bytes) {
  if (bytes.size() != kCswLength || get_le32(bytes, 0) != kCswSignature) return std::nullopt;
  return Csw{get_le32(bytes, 4), get_le32(bytes, 8), bytes[12]};
}

Cbw make_read10(std::uint32_t tag, std::uint32_t lba, std::uint32_t length_bytes) {
  Cbw cbw;
  cbw.tag = tag;
  cbw.data_transfer_length = length_bytes;
  cbw.flags = 0x80;  // device to host
  cbw.cb_length = 10;
  const std::uint32_t blocks = (length_bytes + kBlockSize - 1) / kBlockSize;
  cbw.cb[0] = kOpRead10;
  cbw.cb[2] = static_cast<std::uint8_t>(lba >> 24);
  cbw.cb[3] = static_cast<std::uint8_t>(lba >> 16);
  cbw.cb[4] = static_cast<std::uint8_t>(lba >> 8);
  cbw.cb[5] = static_cast<std::uint8_t>(lba);
  cbw.cb[7] = static_cast<std::uint8_t>(blocks >> 8);
  cbw.cb[8] = static_cast<std::uint8_t>(blocks);
  return cbw;
}

Cbw make_test_unit_ready(std::uint32_t tag) {
  Cbw cbw;
  cbw.tag = tag;
  cbw.cb_length = 6;
  cbw.cb[0] = kOpTestUnitReady;
  return cbw;
}

}  // namespace usbinject
