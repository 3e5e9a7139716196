#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace usbinject {

enum class Errc {
  // packet codec
  CheckNibbleMismatch,
  UnknownPid,
  Crc5Mismatch,
  Crc16Mismatch,
  TruncatedPacket,
  MalformedPacket,
  // simulation core
  PastEvent,
  // hub / host
  UnknownPort,
  UnroutablePacket,
  EnumerationTimeout,
  // devices
  RolloverExceeded,
  MalformedCbw,
  // analyzer
  UnknownLink,
  MalformedTraceLine,
  // scenario
  SchemaViolation,
  TopologyInvariantViolation,
  Io,
};

std::string_view errc_name(Errc code);

class UsbError : public std::runtime_error {
 public:
  UsbError(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace usbinject
