#include "usbinject/policy.hpp"

#include "usbinject/error.hpp"

namespace usbinject {

std::string_view outcome_name(Outcome outcome) {
  switch (outcome) {
    case Outcome::Data: return "Data";
    case Outcome::Nak: return "Nak";
    case Outcome::Stall: return "Stall";
    case Outcome::Ack: return "Ack";
    case Outcome::Nyet: return "Nyet";
    case Outcome::Garble: return "Garble";
    case Outcome::Timeout: return "Timeout";
  }
  return "?";
}

std::string_view host_action_name(HostAction action) {
  switch (action) {
    case HostAction::AckSent: return "AckSent";
    case HostAction::Retry: return "Retry";
    case HostAction::Abort: return "Abort";
    case HostAction::None: return "None";
  }
  return "?";
}

std::string_view policy_action_name(PolicyAction action) {
  switch (action) {
    case PolicyAction::Allow: return "Allow";
    case PolicyAction::Block: return "Block";
    case PolicyAction::Reject: return "Reject";
  }
  return "?";
}

std::optional<PolicyAction> parse_policy_action(std::string_view text) {
  if (text == "Allow") return PolicyAction::Allow;
  if (text == "Block") return PolicyAction::Block;
  if (text == "Reject") return PolicyAction::Reject;
  return std::nullopt;
}

std::pair<int, PolicyAction> PolicyEngine::evaluate(const DeviceIdentity& identity,
                                                    std::optional<std::uint8_t> endpoint) const {
  const DeviceDescriptor& d = identity.descriptor;
  for (std::size_t i = 0; i < policy_.rules.size(); ++i) {
    const RuleMatch& m = policy_.rules[i].match;
    if (m.vendor_id && *m.vendor_id != d.vendor_id) continue;
    if (m.product_id && *m.product_id != d.product_id) continue;
    if (m.device_class && *m.device_class != d.device_class) continue;
    if (m.attachment && *m.attachment != identity.attachment) continue;
    if (m.endpoint && endpoint && *m.endpoint != *endpoint) continue;
    return {static_cast<int>(i), policy_.rules[i].action};
  }
  return {-1, policy_.default_action};
}

PolicyAction PolicyEngine::admit(const DeviceIdentity& identity) const {
  return evaluate(identity, std::nullopt).second;
}

Decision PolicyEngine::apply(const TransactionRecord& record, const DeviceIdentity* identity) {
  PolicyDecision d;
  d.record_index = record.index;
  d.attributed_address = record.attributed_address;
  if (identity == nullptr) {
    d.action = PolicyAction::Reject;
    d.decision = Decision::Drop;
  } else {
    const auto [rule, action] = evaluate(*identity, record.token.endpoint);
    d.matched_rule = rule;
    d.action = action;
    d.decision = action == PolicyAction::Allow ? Decision::Deliver : Decision::Drop;
  }
  log_.push_back(d);
  return d.decision;
}

std::string_view policy_preset_name(PolicyPreset preset) {
  switch (preset) {
    case PolicyPreset::InterfaceFilter: return "interface-filter";
    case PolicyPreset::DriverGate: return "driver-gate";
    case PolicyPreset::AllowBlockReject: return "allow-block-reject";
    case PolicyPreset::VmPassthrough: return "vm-passthrough";
    case PolicyPreset::AllowlistOnly: return "allowlist-only";
  }
  return "?";
}

std::optional<PolicyPreset> parse_policy_preset(std::string_view text) {
  for (PolicyPreset p : kAllPolicyPresets) {
    if (policy_preset_name(p) == text) return p;
  }
  return std::nullopt;
}

Policy make_preset(PolicyPreset preset, const DeviceDescriptor& trusted,
                   const DeviceDescriptor& untrusted, PolicyAction untrusted_action) {
  if (untrusted_action == PolicyAction::Allow) {
    throw UsbError(Errc::SchemaViolation, "preset needs Block or Reject for the untrusted device");
  }
  auto by_id = [](const DeviceDescriptor& d) {
    RuleMatch m;
    m.vendor_id = d.vendor_id;
    m.product_id = d.product_id;
    return m;
  };
  Policy p;
  switch (preset) {
    case PolicyPreset::InterfaceFilter: {
      // Filter on class and interface endpoint, everything else passes.
      RuleMatch deny;
      deny.device_class = untrusted.device_class;
      p.rules.push_back({untrusted_action, deny});
      RuleMatch allow;
      allow.device_class = trusted.device_class;
      allow.endpoint = 1;
      p.rules.push_back({PolicyAction::Allow, allow});
      p.default_action = PolicyAction::Allow;
      break;
    }
    case PolicyPreset::DriverGate: {
      RuleMatch allow = by_id(trusted);
      allow.device_class = trusted.device_class;
      p.rules.push_back({PolicyAction::Allow, allow});
      RuleMatch deny;
      deny.device_class = untrusted.device_class;
      p.rules.push_back({untrusted_action, deny});
      p.default_action = PolicyAction::Block;
      break;
    }
    case PolicyPreset::AllowBlockReject:
      p.rules.push_back({PolicyAction::Allow, by_id(trusted)});
      p.rules.push_back({untrusted_action, by_id(untrusted)});
      p.default_action = PolicyAction::Block;
      break;
    case PolicyPreset::VmPassthrough: {
      p.rules.push_back({untrusted_action, by_id(untrusted)});
      RuleMatch allow;
      allow.vendor_id = trusted.vendor_id;
      p.rules.push_back({PolicyAction::Allow, allow});
      p.default_action = PolicyAction::Block;
      break;
    }
    case PolicyPreset::AllowlistOnly:
      p.rules.push_back({PolicyAction::Allow, by_id(trusted)});
      p.default_action = untrusted_action;
      break;
  }
  return p;
}

Fingerprint fingerprint(const DeviceIdentity& identity,
                        std::span<const TransactionRecord> records) {
  Fingerprint f;
  f.vendor_id = identity.descriptor.vendor_id;
  f.product_id = identity.descriptor.product_id;
  f.bcd_device = identity.descriptor.bcd_device;
  f.device_class = identity.descriptor.device_class;
  double total = 0.0;
  for (const TransactionRecord& r : records) {
    if (r.attributed_address != identity.address || !r.response_delay) continue;
    total += static_cast<double>(r.response_delay->count());
    ++f.samples;
  }
  if (f.samples) f.mean_response_delay_ns = total / static_cast<double>(f.samples);
  return f;
}

}  // namespace usbinject
