#pragma once

// Standard hub: repeats downstream traffic, merges upstream traffic through a
// single arbiter, and (when running at high speed) translates split transactions
// for classic-speed ports.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "usbinject/descriptor.hpp"
#include "usbinject/sim.hpp"

namespace usbinject {

enum class TtMode : std::uint8_t { SingleTT, MultiTT };
enum class CollisionPolicy : std::uint8_t { FirstWins, GarbleError };

std::string_view tt_mode_name(TtMode mode);
std::optional<TtMode> parse_tt_mode(std::string_view text);
std::string_view collision_policy_name(CollisionPolicy policy);
std::optional<CollisionPolicy> parse_collision_policy(std::string_view text);

inline constexpr SimTime kHighSpeedRepeaterDelay{2500};
inline constexpr SimTime kClassicRepeaterDelay{40};
inline constexpr SimTime kDefaultTtResponseLatency{1000};
inline constexpr SimTime kLinkPropagation{26};

struct HubConfig {
  int num_ports = 4;
  TtMode tt_mode = TtMode::SingleTT;
  CollisionPolicy collision_policy = CollisionPolicy::FirstWins;
  SimTime repeater_delay = kHighSpeedRepeaterDelay;
  Speed operating_speed = Speed::High;
  SimTime tt_response_latency = kDefaultTtResponseLatency;
  // port -> maximum extra delay drawn uniformly per packet before arbitration
  std::map<int, SimTime> latency_bias;
  // A hub built into another product; not counted against the chain limit.
  bool embedded = false;
};

struct HubCounters {
  std::uint64_t forwarded_upstream = 0;
  std::uint64_t dropped = 0;
  std::uint64_t garbles = 0;
  std::uint64_t orphan_responses = 0;
  std::uint64_t split_starts = 0;
  std::uint64_t split_completes = 0;
};

class Hub : public Node {
 public:
  Hub(std::string name, HubConfig config);

  NodeKind kind() const override { return NodeKind::Hub; }
  const HubConfig& config() const { return config_; }
  const HubCounters& counters() const { return counters_; }
  const DeviceDescriptor& descriptor() const { return descriptor_; }

  std::uint8_t address() const { return address_; }
  void set_address(std::uint8_t address) { address_ = address; }

  /// Operating speed clamped to what the upstream link supports.
  Speed effective_speed() const;

  void on_arrival_start(int port, const Transmission& tx) override;
  void on_arrival_end(int port, const Transmission& tx) override;

 private:
  struct Arbiter {
    SimTime busy_until{-1};
    TxId forwarded = kNoTx;
    bool garble_emitted = false;
  };

  enum class TtPhase : std::uint8_t { Idle, Dispatched, Locked, Done };

  struct TtState {
    TtPhase phase = TtPhase::Idle;
    SplitPacket split;
    TokenPacket token;
    int port = 0;
    std::uint64_t generation = 0;
    TxId locked = kNoTx;
    SimTime lock_until{0};
    bool collided = false;
    bool has_result = false;
    PacketBody result;
    Provenance result_provenance;
    std::optional<EventHandle> timeout;
  };

  void repeat_downstream(const Transmission& tx);
  void on_split_traffic(const Transmission& tx);
  void start_split(const SplitPacket& split, const TokenPacket& token,
                   const std::optional<DataPacket>& data);
  void complete_split(const SplitPacket& split, const TokenPacket& token);
  std::vector<int> classic_ports_for(const TtState& tt, Speed speed) const;

  // Upstream arbiter shared by repeated traffic and the hub's own split answers.
  void offer_upstream(const Packet& packet, TxId source, SimTime duration);
  void tt_arrival_start(int port, TxId tx);
  void tt_arrival_end(int port, TxId tx);
  TtState& tt_for(int port);
  SimTime bias_for(int port);

  HubConfig config_;
  DeviceDescriptor descriptor_;
  std::uint8_t address_ = 0;
  HubCounters counters_;
  Arbiter upstream_;
  std::vector<TtState> tts_;  // one for SingleTT, num_ports+1 for MultiTT
  std::map<TxId, SimTime> bias_applied_;

  std::optional<SplitPacket> split_header_;
  std::optional<std::pair<SplitPacket, TokenPacket>> split_out_;
};

}  // namespace usbinject
