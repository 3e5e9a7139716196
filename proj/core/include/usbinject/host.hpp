#pragma once

// Host controller: routed root ports, abstract enumeration, one transaction in
// flight at a time, split transactions for classic devices behind a
// high-speed hub, and the class drivers that consume delivered data.

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "usbinject/bot.hpp"
#include "usbinject/descriptor.hpp"
#include "usbinject/keymap.hpp"
#include "usbinject/policy.hpp"
#include "usbinject/record.hpp"
#include "usbinject/sim.hpp"

namespace usbinject {

enum class EnumPhase : std::uint8_t { Detached, Reset, Default, Addressed, Configured, Refused };
std::string_view enum_phase_name(EnumPhase phase);

struct EnumerationState {
  NodeId node = kNoNode;
  EnumPhase phase = EnumPhase::Detached;
  std::uint8_t address = 0;
  DeviceDescriptor descriptor;
  std::string attachment;  // "parent:port"
  int root_port = 0;
};

struct EndpointSchedule {
  std::uint8_t address = 0;
  std::uint8_t endpoint = 1;
  TransferDir dir = TransferDir::In;
  EndpointType type = EndpointType::Interrupt;
  SimTime poll_interval{0};
};

struct HostConfig {
  int root_ports = 4;
  std::optional<SimTime> response_timeout;  // default: per-speed response_timeout()
  std::optional<SimTime> guard_gap;         // default: the response timeout
  int max_retries = 3;
  int max_csplit_nyets = 16;
  int max_ping_nyets = 32;
  SimTime ping_backoff{10'000};
  SimTime nak_backoff{20'000};
  SimTime enumeration_step{100'000};
  int enumeration_retries = 3;
  bool sof = false;
  SimTime tur_interval{0};  // 0: no periodic TEST UNIT READY
};

inline constexpr SimTime kFrame{1'000'000};
inline constexpr SimTime kMicroframe{125'000};

struct TransactionRequest {
  PidKind pid = PidKind::In;
  std::uint8_t address = 0;
  std::uint8_t endpoint = 1;
  EndpointType type = EndpointType::Interrupt;
  std::vector<std::uint8_t> payload;  // OUT/SETUP
  std::function<void(const TransactionRecord&, Decision)> done;
  int attempts = 0;
};

struct MsdTransfer {
  Cbw cbw;
  std::vector<std::uint8_t> data;
  std::optional<Csw> csw;
  std::size_t data_packets = 0;
  bool complete = false;
  bool failed = false;
};

class Host;

/// Bulk-only transport driver: CBW by PING then OUT on ep2, data and CSW by IN on
/// ep1. A transfer ends when the CSW arrives.
class MsdDriver {
 public:
  MsdDriver(Host& host, std::uint8_t address) : host_(host), address_(address) {}

  void read10(std::uint32_t lba, std::uint32_t length_bytes);
  void test_unit_ready();
  bool busy() const { return current_.has_value(); }
  const std::vector<MsdTransfer>& transfers() const { return done_; }
  std::uint8_t address() const { return address_; }

 private:
  void enqueue(Cbw cbw);
  void next();
  void send_cbw();
  void request_data();
  void request_status();
  void finish(bool failed);

  Host& host_;
  std::uint8_t address_;
  std::uint32_t next_tag_ = 0x1000;
  std::deque<Cbw> pending_;
  std::optional<MsdTransfer> current_;
  std::vector<MsdTransfer> done_;
};

class Host : public Node {
 public:
  explicit Host(std::string name, HostConfig config = {});

  NodeKind kind() const override { return NodeKind::Host; }
  const HostConfig& config() const { return config_; }

  void set_policy(Policy policy) { policy_.emplace(std::move(policy)); }
  const PolicyEngine* policy() const { return policy_ ? &*policy_ : nullptr; }

  /// Begin enumerating everything attached, breadth first.
  void start();
  void on_configured(std::function<void(const EnumerationState&)> fn) {
    configured_hooks_.push_back(std::move(fn));
  }
  const std::vector<EnumerationState>& enumeration() const { return enumeration_; }
  const EnumerationState* state_of(NodeId node) const;
  const EnumerationState* state_at(std::uint8_t address) const;
  const std::vector<EndpointSchedule>& schedules() const { return schedules_; }

  /// Root port whose subtree holds the address. Throws UsbError(UnroutablePacket).
  int route_downstream(std::uint8_t address) const;

  void submit(TransactionRequest request);
  /// PING until ACK (NYET/NAK back off, bounded), then OUT with payload.
  void ping_then_out(std::uint8_t address, std::uint8_t endpoint, std::vector<std::uint8_t> payload,
                     std::function<void(const TransactionRecord&, Decision)> done);

  const std::vector<TransactionRecord>& records() const { return records_; }
  const std::vector<ProvenanceEntry>& provenance() const { return provenance_; }
  std::uint64_t strays() const { return strays_; }

  const std::map<std::uint8_t, std::string>& keystrokes() const { return keystrokes_; }
  std::string all_keystrokes() const;
  std::uint64_t mouse_reports() const { return mouse_reports_; }
  MsdDriver* msd(std::uint8_t address);
  /// Run fn after delay on the host's timeline.
  void after(SimTime delay, std::function<void()> fn);
  bool expected_toggle(std::uint8_t address, std::uint8_t endpoint, TransferDir dir) const;

  void on_arrival_start(int port, const Transmission& tx) override;
  void on_arrival_end(int port, const Transmission& tx) override;

 private:
  struct SplitRoute {
    NodeId hub = kNoNode;
    std::uint8_t hub_address = 0;
    std::uint8_t port = 0;
    Speed speed = Speed::Full;
  };

  struct Active {
    TransactionRequest request;
    TokenPacket token;
    int root_port = 0;
    Speed speed = Speed::High;  // packet speed on the root link
    std::optional<SplitRoute> split;
    bool awaiting = false;
    SimTime started{0};
    SimTime sent_end{0};
    std::optional<TxId> response;
    SimTime response_start{0};
    std::optional<EventHandle> timeout;
    int csplit_nyets = 0;
  };

  struct PingState {
    std::uint8_t address = 0;
    std::uint8_t endpoint = 0;
    std::vector<std::uint8_t> payload;
    std::function<void(const TransactionRecord&, Decision)> done;
    int waits = 0;
  };

  void enumeration_step(std::size_t index, EnumPhase next, int attempt);
  void configure(EnumerationState& state);
  void schedule_poll(const EndpointSchedule& s, SimTime at);

  void ping_step(std::shared_ptr<PingState> state);
  void kick();
  void begin(TransactionRequest request);
  void send_complete_split();
  void await_response(SimTime deadline);
  void on_response_timeout();
  void handle_response(const Transmission& tx);
  void finish(TransactionRecord record, std::optional<Provenance> origin);
  std::optional<SplitRoute> split_route(NodeId device) const;
  Speed device_speed(NodeId device) const;
  SimTime timeout_for(Speed speed) const;
  SimTime guard_for(Speed speed) const;
  bool& toggle(std::uint8_t address, std::uint8_t endpoint, TransferDir dir);
  void deliver_interrupt(const TransactionRecord& record, Decision decision);
  void emit_sof();

  HostConfig config_;
  std::optional<PolicyEngine> policy_;
  std::vector<std::function<void(const EnumerationState&)>> configured_hooks_;
  std::vector<EnumerationState> enumeration_;
  std::uint8_t next_address_ = 1;
  std::map<std::uint8_t, NodeId> addresses_;
  std::vector<EndpointSchedule> schedules_;
  std::map<std::pair<std::uint8_t, std::uint8_t>, bool> poll_outstanding_;

  std::deque<TransactionRequest> queue_;
  std::optional<Active> active_;
  SimTime next_free_{0};
  bool kick_pending_ = false;
  std::map<std::tuple<std::uint8_t, std::uint8_t, TransferDir>, bool> toggles_;

  std::vector<TransactionRecord> records_;
  std::vector<ProvenanceEntry> provenance_;
  std::uint64_t strays_ = 0;

  std::map<std::uint8_t, std::string> keystrokes_;
  std::map<std::uint8_t, KeystrokeDecoder> decoders_;
  std::uint64_t mouse_reports_ = 0;
  std::map<std::uint8_t, std::unique_ptr<MsdDriver>> msd_;
  std::uint16_t frame_ = 0;
  std::vector<std::shared_ptr<std::function<void()>>> tur_ticks_;
};

}  // namespace usbinject
