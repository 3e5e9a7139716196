#pragma once

// Host-software device authorization. Rules see only what the host believes:
// the descriptor registered for the attributed address and where that device
// was attached.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "usbinject/descriptor.hpp"
#include "usbinject/record.hpp"

namespace usbinject {

enum class PolicyAction : std::uint8_t { Allow, Block, Reject };
enum class Decision : std::uint8_t { Deliver, Drop };

std::string_view policy_action_name(PolicyAction action);
std::optional<PolicyAction> parse_policy_action(std::string_view text);

struct RuleMatch {
  std::optional<std::uint16_t> vendor_id;
  std::optional<std::uint16_t> product_id;
  std::optional<DeviceClass> device_class;
  std::optional<std::uint8_t> endpoint;
  std::optional<std::string> attachment;  // "parent:port"
};

struct PolicyRule {
  PolicyAction action = PolicyAction::Allow;
  RuleMatch match;
};

struct Policy {
  std::vector<PolicyRule> rules;
  PolicyAction default_action = PolicyAction::Allow;
};

/// What the host has on file for an address.
struct DeviceIdentity {
  std::uint8_t address = 0;
  DeviceDescriptor descriptor;
  std::string attachment;
};

struct PolicyDecision {
  std::uint64_t record_index = 0;
  std::uint8_t attributed_address = 0;
  int matched_rule = -1;  // -1: default action
  PolicyAction action = PolicyAction::Allow;
  Decision decision = Decision::Deliver;
};

class PolicyEngine {
 public:
  explicit PolicyEngine(Policy policy) : policy_(std::move(policy)) {}

  const Policy& policy() const { return policy_; }

  /// Enumeration-time check; Reject refuses configuration.
  PolicyAction admit(const DeviceIdentity& identity) const;

  /// identity is null when the address was never configured.
  Decision apply(const TransactionRecord& record, const DeviceIdentity* identity);

  const std::vector<PolicyDecision>& log() const { return log_; }

 private:
  std::pair<int, PolicyAction> evaluate(const DeviceIdentity& identity,
                                        std::optional<std::uint8_t> endpoint) const;

  Policy policy_;
  std::vector<PolicyDecision> log_;
};

// Rule templates in the style of five deployed tools: a kernel interface
// filter, a driver-binding gate, an allow/block/reject rule language, a VM
// passthrough filter list, and a plain allowlist.
enum class PolicyPreset : std::uint8_t {
  InterfaceFilter,
  DriverGate,
  AllowBlockReject,
  VmPassthrough,
  AllowlistOnly,
};

inline constexpr PolicyPreset kAllPolicyPresets[] = {
    PolicyPreset::InterfaceFilter, PolicyPreset::DriverGate, PolicyPreset::AllowBlockReject,
    PolicyPreset::VmPassthrough, PolicyPreset::AllowlistOnly};

std::string_view policy_preset_name(PolicyPreset preset);
std::optional<PolicyPreset> parse_policy_preset(std::string_view text);

/// untrusted_action must be Block or Reject.
Policy make_preset(PolicyPreset preset, const DeviceDescriptor& trusted,
                   const DeviceDescriptor& untrusted, PolicyAction untrusted_action);

struct Fingerprint {
  std::uint16_t vendor_id = 0;
  std::uint16_t product_id = 0;
  std::uint16_t bcd_device = 0;
  DeviceClass device_class = DeviceClass::HidKeyboard;
  double mean_response_delay_ns = 0.0;
  std::size_t samples = 0;
};

/// Descriptor identity plus mean reply delay over the records attributed to
/// this device's address.
Fingerprint fingerprint(const DeviceIdentity& identity,
                        std::span<const TransactionRecord> records);

}  // namespace usbinject
