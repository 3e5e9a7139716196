#include <gtest/gtest.h>

#include "usbinject/error.hpp"
#include "usbinject/policy.hpp"

using namespace usbinject;

namespace {

DeviceIdentity identity(std::uint8_t addr, DeviceDescriptor d, std::string attachment = "hub:1") {
  return DeviceIdentity{addr, std::move(d), std::move(attachment)};
}

TransactionRecord in_record(std::uint8_t addr, std::uint8_t ep = 1) {
  TransactionRecord r;
  r.token = TokenPacket::make(PidKind::In, addr, ep);
  r.attributed_address = addr;
  r.outcome = Outcome::Data;
  return r;
}

}  // namespace

TEST(Policy, FirstMatchingRuleWinsThenDefault) {
  Policy p;
  RuleMatch by_port;
  by_port.attachment = "hub:2";
  p.rules.push_back({PolicyAction::Block, by_port});
  RuleMatch keyboards;
  keyboards.device_class = DeviceClass::HidKeyboard;
  p.rules.push_back({PolicyAction::Allow, keyboards});
  p.default_action = PolicyAction::Reject;
  PolicyEngine e(p);

  const auto kb1 = identity(1, descriptors::dell_keyboard(), "hub:1");
  const auto kb2 = identity(2, descriptors::dell_keyboard(), "hub:2");
  const auto disk = identity(3, descriptors::sandisk_flash(), "hub:3");
  EXPECT_EQ(e.admit(kb1), PolicyAction::Allow);
  EXPECT_EQ(e.admit(kb2), PolicyAction::Block);
  EXPECT_EQ(e.admit(disk), PolicyAction::Reject);

  EXPECT_EQ(e.apply(in_record(1), &kb1), Decision::Deliver);
  EXPECT_EQ(e.apply(in_record(2), &kb2), Decision::Drop);
  EXPECT_EQ(e.apply(in_record(9), nullptr), Decision::Drop);
  ASSERT_EQ(e.log().size(), 3u);
  EXPECT_EQ(e.log()[0].matched_rule, 1);
  EXPECT_EQ(e.log()[1].matched_rule, 0);
  EXPECT_EQ(e.log()[2].matched_rule, -1);
}

TEST(Policy, EndpointRulesOnlyConstrainTraffic) {
  Policy p;
  RuleMatch ep2;
  ep2.endpoint = 2;
  p.rules.push_back({PolicyAction::Block, ep2});
  PolicyEngine e(p);
  const auto kb = identity(1, descriptors::dell_keyboard());
  EXPECT_EQ(e.admit(kb), PolicyAction::Block);
  EXPECT_EQ(e.apply(in_record(1, 1), &kb), Decision::Deliver);
  EXPECT_EQ(e.apply(in_record(1, 2), &kb), Decision::Drop);
}

TEST(Policy, EveryPresetAllowsTheTrustedDeviceAndStopsTheOther) {
  const DeviceDescriptor trusted = descriptors::dell_keyboard();
  for (const DeviceDescriptor& untrusted :
       {descriptors::generic_mouse(Speed::Low), descriptors::serial_comm()}) {
    for (PolicyPreset preset : kAllPolicyPresets) {
      for (PolicyAction action : {PolicyAction::Block, PolicyAction::Reject}) {
        PolicyEngine e(make_preset(preset, trusted, untrusted, action));
        const auto good = identity(1, trusted);
        const auto bad = identity(2, untrusted, "hub:2");
        const std::string label(policy_preset_name(preset));
        EXPECT_EQ(e.admit(good), PolicyAction::Allow) << label;
        EXPECT_EQ(e.admit(bad), action) << label;
        EXPECT_EQ(e.apply(in_record(1), &good), Decision::Deliver) << label;
        EXPECT_EQ(e.apply(in_record(2), &bad), Decision::Drop) << label;
      }
    }
  }
}

TEST(Policy, PresetsNeedAStoppingAction) {
  try {
    make_preset(PolicyPreset::AllowlistOnly, descriptors::dell_keyboard(), descriptors::serial_comm(),
                PolicyAction::Allow);
    FAIL();
  } catch (const UsbError& e) {
    EXPECT_EQ(e.code(), Errc::SchemaViolation);
  }
}

TEST(Policy, NamesRoundTrip) {
  for (PolicyPreset p : kAllPolicyPresets) EXPECT_EQ(parse_policy_preset(policy_preset_name(p)), p);
  for (PolicyAction a : {PolicyAction::Allow, PolicyAction::Block, PolicyAction::Reject}) {
    EXPECT_EQ(parse_policy_action(policy_action_name(a)), a);
  }
  EXPECT_FALSE(parse_policy_preset("usbguard"));
}

TEST(Policy, FingerprintAveragesReplyDelaysForTheAddress) {
  std::vector<TransactionRecord> recs{in_record(1), in_record(1), in_record(2), in_record(1)};
  recs[0].response_delay = SimTime{1000};
  recs[1].response_delay = SimTime{3000};
  recs[2].response_delay = SimTime{9000};
  const Fingerprint f = fingerprint(identity(1, descriptors::dell_keyboard()), recs);
  EXPECT_EQ(f.samples, 2u);
  EXPECT_DOUBLE_EQ(f.mean_response_delay_ns, 2000.0);
  EXPECT_EQ(f.vendor_id, descriptors::dell_keyboard().vendor_id);
}
