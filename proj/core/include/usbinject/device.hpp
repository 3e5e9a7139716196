#pragma once

// Devices at endpoint granularity. Device holds the serial interface engine
// (address check, token/data/handshake sequencing, commit-on-ACK); subclasses
// supply endpoint behavior.

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "usbinject/bot.hpp"
#include "usbinject/descriptor.hpp"
#include "usbinject/keymap.hpp"
#include "usbinject/sim.hpp"

namespace usbinject {

enum class AddressCheck : std::uint8_t { Strict, PromiscuousEp1 };

inline constexpr SimTime kInjectorLatency{500};
inline constexpr SimTime kKeyboardLatency{3000};
inline constexpr SimTime kGamingKeyboardLatency{2000};
inline constexpr SimTime kMassStorageLatency{5000};

class Device : public Node {
 public:
  Device(std::string name, DeviceDescriptor descriptor, SimTime latency,
         AddressCheck check = AddressCheck::Strict);

  NodeKind kind() const override { return NodeKind::Device; }
  const DeviceDescriptor& descriptor() const { return descriptor_; }
  AddressCheck address_check() const { return check_; }

  std::uint8_t address() const { return address_; }
  void set_address(std::uint8_t address) { address_ = address; }
  SimTime latency() const { return latency_; }
  void set_latency(SimTime latency) { latency_ = latency; }

  /// Descriptor speed clamped to the attachment link.
  Speed speed() const;

  // A device that never answers enumeration requests.
  bool answers_enumeration() const { return answers_enumeration_; }
  void set_answers_enumeration(bool on) { answers_enumeration_ = on; }

  void on_arrival_end(int port, const Transmission& tx) override;

 protected:
  virtual std::optional<PacketBody> handle_in(std::uint8_t endpoint);
  virtual std::optional<PacketBody> handle_out(std::uint8_t endpoint, const DataPacket& data);
  virtual std::optional<PacketBody> handle_ping(std::uint8_t endpoint);
  /// Tokens for endpoint 1 of another address (PromiscuousEp1 only).
  virtual std::optional<PacketBody> handle_foreign_ep1(const TokenPacket& token);
  /// Every downstream packet at this device's speed, before SIE handling.
  virtual void observe(const PacketBody& body) { (void)body; }
  /// The host acknowledged DATA this device sent on an IN endpoint.
  virtual void data_committed(std::uint8_t endpoint) { (void)endpoint; }

  void respond(PacketBody body);

 private:
  DeviceDescriptor descriptor_;
  SimTime latency_;
  AddressCheck check_;
  std::uint8_t address_ = 0;
  bool answers_enumeration_ = true;
  std::optional<TokenPacket> pending_out_;
  std::optional<std::uint8_t> awaiting_commit_;
};

/// Interrupt IN ep1 keyboard. Each poll dequeues one boot report.
class Keyboard : public Device {
 public:
  Keyboard(std::string name, DeviceDescriptor descriptor = descriptors::dell_keyboard(),
           SimTime latency = kKeyboardLatency);

  void type(std::string_view text);
  /// Press then release a chord. Throws UsbError(RolloverExceeded) above six keys.
  void press(std::uint8_t modifiers, std::span<const std::uint8_t> keys);

  std::size_t pending_reports() const { return reports_.size(); }
  std::uint64_t reports_committed() const { return committed_; }

 protected:
  std::optional<PacketBody> handle_in(std::uint8_t endpoint) override;
  void data_committed(std::uint8_t endpoint) override;

 private:
  std::deque<BootReport> reports_;
  bool toggle_ = false;
  std::uint64_t committed_ = 0;
};

class Mouse : public Device {
 public:
  Mouse(std::string name, DeviceDescriptor descriptor, SimTime latency = kKeyboardLatency);
};

/// Bulk-only mass storage: ep2 OUT carries CBWs, ep1 IN carries data and CSWs.
class MassStorage : public Device {
 public:
  enum class Phase : std::uint8_t { Idle, DataIn, StatusPending };

  MassStorage(std::string name, std::vector<std::uint8_t> image,
              DeviceDescriptor descriptor = descriptors::sandisk_flash(),
              SimTime latency = kMassStorageLatency);

  Phase phase() const { return phase_; }
  bool ep1_toggle() const { return toggle_in_; }
  std::uint64_t packets_committed() const { return committed_; }
  std::uint64_t cbws_seen() const { return cbws_; }
  const std::vector<std::uint8_t>& image() const { return image_; }

 protected:
  std::optional<PacketBody> handle_in(std::uint8_t endpoint) override;
  std::optional<PacketBody> handle_out(std::uint8_t endpoint, const DataPacket& data) override;
  std::optional<PacketBody> handle_ping(std::uint8_t endpoint) override;
  void data_committed(std::uint8_t endpoint) override;

 private:
  std::vector<std::uint8_t> image_;
  Phase phase_ = Phase::Idle;
  std::vector<std::uint8_t> data_;
  std::size_t offset_ = 0;
  std::size_t in_flight_ = 0;
  Csw csw_;
  bool stalled_ = false;
  bool toggle_in_ = false;
  std::uint64_t committed_ = 0;
  std::uint64_t cbws_ = 0;
};

enum class InjectorMode : std::uint8_t { Idle, KeystrokeInject, DosNak, FileHijack, BootHijack };

std::string_view injector_mode_name(InjectorMode mode);
std::optional<InjectorMode> parse_injector_mode(std::string_view text);

inline constexpr std::uint8_t kHijackFill = 0x67;  // 'g'
inline constexpr int kBootTargetIndex = 17;

struct InjectorConfig {
  InjectorMode mode = InjectorMode::Idle;
  bool dos_switch = false;
  // Answer the complete-split on behalf of the victim's transaction translator.
  bool hub_spoof = false;
  std::vector<BootReport> payload;
  std::uint32_t watch_lba = 0;
  int target_index = kBootTargetIndex;
  std::vector<std::uint8_t> replacement;
  SimTime active_from{0};
  std::optional<SimTime> active_until;
};

struct InjectorCounters {
  std::uint64_t data_injected = 0;
  std::uint64_t naks_injected = 0;
  std::uint64_t acks_injected = 0;
  std::uint64_t cbws_parsed = 0;
};

/// Off-path attacker. Presents a benign persona on its own address and answers
/// endpoint-1 tokens addressed to the victim.
class Injector : public Device {
 public:
  Injector(std::string name, DeviceDescriptor persona, InjectorConfig config,
           SimTime latency = kInjectorLatency);

  const InjectorConfig& config() const { return config_; }
  void set_victim_address(std::uint8_t address) { victim_ = address; }
  std::optional<std::uint8_t> victim_address() const { return victim_; }
  const InjectorCounters& counters() const { return counters_; }
  std::size_t payload_remaining() const { return config_.payload.size() - payload_next_; }

 protected:
  std::optional<PacketBody> handle_foreign_ep1(const TokenPacket& token) override;
  void observe(const PacketBody& body) override;

 private:
  bool active() const;
  PidKind next_toggle_pid();
  PacketBody offer(PacketBody body, std::function<void()> commit);

  InjectorConfig config_;
  InjectorCounters counters_;
  std::optional<std::uint8_t> victim_;
  std::size_t payload_next_ = 0;

  // toggle tracking for the victim's ep1
  bool victim_toggle_ = false;
  bool expecting_ack_ = false;
  // Forged DATA not yet ACKed. Replayed on the host's retry; its state change
  // (next report, next block) only lands once the ACK is seen.
  std::optional<PacketBody> unacked_;
  std::function<void()> on_ack_;

  // split context of the most recent token
  std::optional<SplitPhase> split_before_token_;
  std::optional<SplitPhase> current_split_;

  bool out_to_victim_ = false;

  // file hijack
  std::uint32_t captured_tag_ = 0;
  std::uint32_t remaining_ = 0;
  bool csw_pending_ = false;
  bool tur_ack_pending_ = false;

  // boot hijack
  bool boot_armed_ = false;
  int boot_count_ = 0;
};

}  // namespace usbinject
