#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "usbinject/packet.hpp"
#include "usbinject/sim.hpp"

namespace usbinject {

enum class Outcome : std::uint8_t { Data, Nak, Stall, Ack, Nyet, Garble, Timeout };
enum class HostAction : std::uint8_t { AckSent, Retry, Abort, None };

std::string_view outcome_name(Outcome outcome);
std::string_view host_action_name(HostAction action);

/// What the host concluded about one transaction attempt. attributed_address is
/// always token.address: the host credits whatever answered to the device it
/// last probed.
struct TransactionRecord {
  std::uint64_t index = 0;
  TokenPacket token;
  std::optional<PacketBody> response;
  std::uint8_t attributed_address = 0;
  Outcome outcome = Outcome::Timeout;
  HostAction host_action = HostAction::None;
  SimTime t{0};
  bool split = false;
  // Data accepted with the expected toggle and passed up to drivers.
  bool delivered = false;
  // token end to response arrival start, as seen by the host
  std::optional<SimTime> response_delay;
};

/// Hidden ground truth kept beside each record. Never visible to drivers or policy.
struct ProvenanceEntry {
  std::optional<Provenance> origin;
  std::optional<NodeId> split_hub;
};

}  // namespace usbinject
