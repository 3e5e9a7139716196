#include "usbinject/error.hpp"

namespace usbinject {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::CheckNibbleMismatch: return "CheckNibbleMismatch";
    case Errc::UnknownPid: return "UnknownPid";
    case Errc::Crc5Mismatch: return "Crc5Mismatch";
    case Errc::Crc16Mismatch: return "Crc16Mismatch";
    case Errc::TruncatedPacket: return "TruncatedPacket";
    case Errc::MalformedPacket: return "MalformedPacket";
    case Errc::PastEvent: return "PastEvent";
    case Errc::UnknownPort: return "UnknownPort";
    case Errc::UnroutablePacket: return "UnroutablePacket";
    case Errc::EnumerationTimeout: return "EnumerationTimeout";
    case Errc::RolloverExceeded: return "RolloverExceeded";
    case Errc::MalformedCbw: return "MalformedCbw";
    case Errc::UnknownLink: return "UnknownLink";
    case Errc::MalformedTraceLine: return "MalformedTraceLine";
    case Errc::SchemaViolation: return "SchemaViolation";
    case Errc::TopologyInvariantViolation: return "TopologyInvariantViolation";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace usbinject
