#include <gtest/gtest.h>

#include "usbinject/device.hpp"
#include "usbinject/error.hpp"
#include "usbinject/host.hpp"
#include "usbinject/hub.hpp"

using namespace usbinject;

namespace {

struct Rig {
  Rig() : sim(1) { host = &sim.add_node<Host>("host"); }

  template <class T, class... Args>
  T& attach(NodeId parent, int port, Speed speed, Args&&... args) {
    T& n = sim.add_node<T>(std::forward<Args>(args)...);
    sim.connect(parent, port, n.id(), speed, kLinkPropagation);
    return n;
  }

  Simulator sim;
  Host* host = nullptr;
};

}  // namespace

TEST(Enumeration, BreadthFirstAddressesAndAttachments) {
  Rig r;
  auto& kb1 = r.attach<Keyboard>(r.host->id(), 1, Speed::Low, "kb1");
  auto& hub = r.attach<Hub>(r.host->id(), 2, Speed::High, "hub", HubConfig{});
  auto& kb2 = r.attach<Keyboard>(hub.id(), 3, Speed::Low, "kb2");
  r.host->start();
  r.sim.run_until(SimTime{5'000'000});

  const EnumerationState* a = r.host->state_of(kb1.id());
  const EnumerationState* h = r.host->state_of(hub.id());
  const EnumerationState* b = r.host->state_of(kb2.id());
  ASSERT_TRUE(a && h && b);
  EXPECT_EQ(a->phase, EnumPhase::Configured);
  EXPECT_EQ(b->phase, EnumPhase::Configured);
  EXPECT_EQ(a->address, 1);
  EXPECT_EQ(h->address, 2);
  EXPECT_EQ(b->address, 3);
  EXPECT_EQ(hub.address(), 2);
  EXPECT_EQ(kb2.address(), 3);
  EXPECT_EQ(b->attachment, "hub:3");
  EXPECT_EQ(b->root_port, 2);
  EXPECT_EQ(r.host->route_downstream(3), 2);
}

TEST(Enumeration, SilentDeviceTimesOut) {
  Rig r;
  auto& kb = r.attach<Keyboard>(r.host->id(), 1, Speed::Low, "kb");
  kb.set_answers_enumeration(false);
  r.host->start();
  try {
    r.sim.run_until(SimTime{10'000'000});
    FAIL();
  } catch (const UsbError& e) {
    EXPECT_EQ(e.code(), Errc::EnumerationTimeout);
  }
}

TEST(Enumeration, PolicyRejectRefusesConfiguration) {
  Rig r;
  auto& kb = r.attach<Keyboard>(r.host->id(), 1, Speed::Low, "kb");
  Policy p;
  PolicyRule rule;
  rule.action = PolicyAction::Reject;
  rule.match.device_class = DeviceClass::HidKeyboard;
  p.rules.push_back(rule);
  r.host->set_policy(p);
  r.host->start();
  r.sim.run_until(SimTime{5'000'000});
  const EnumerationState* s = r.host->state_of(kb.id());
  ASSERT_TRUE(s);
  EXPECT_EQ(s->phase, EnumPhase::Refused);
  EXPECT_EQ(s->address, 0);
  EXPECT_TRUE(r.host->records().empty());
}

TEST(Host, UnknownAddressIsUnroutable) {
  Rig r;
  r.host->start();
  try {
    r.host->route_downstream(42);
    FAIL();
  } catch (const UsbError& e) {
    EXPECT_EQ(e.code(), Errc::UnroutablePacket);
  }
}

TEST(Host, KeystrokesArriveThroughSplitTransactions) {
  Rig r;
  auto& hub = r.attach<Hub>(r.host->id(), 1, Speed::High, "hub", HubConfig{});
  auto& kb = r.attach<Keyboard>(hub.id(), 1, Speed::Low, "kb");
  kb.type("hi");
  r.host->start();
  r.sim.run_until(SimTime{200'000'000});
  EXPECT_EQ(r.host->all_keystrokes(), "hi");
  EXPECT_EQ(kb.reports_committed(), 4u);
  std::size_t delivered = 0;
  for (std::size_t i = 0; i < r.host->records().size(); ++i) {
    const TransactionRecord& rec = r.host->records()[i];
    EXPECT_TRUE(rec.split);
    EXPECT_EQ(rec.attributed_address, kb.address());
    if (rec.delivered) {
      ++delivered;
      EXPECT_EQ(r.host->provenance()[i].origin->node, kb.id());
    }
  }
  EXPECT_EQ(delivered, 4u);
}

TEST(Host, DirectDataIsAckedAndTheToggleAdvances) {
  Rig r;
  auto& kb = r.attach<Keyboard>(r.host->id(), 1, Speed::Full, "kb", descriptors::corsair_keyboard(),
                                kGamingKeyboardLatency);
  kb.type("a");
  r.host->start();
  r.sim.run_until(SimTime{50'000'000});
  int acked = 0;
  for (const TransactionRecord& rec : r.host->records()) {
    if (rec.outcome == Outcome::Data) {
      EXPECT_EQ(rec.host_action, HostAction::AckSent);
      ++acked;
    }
  }
  EXPECT_EQ(acked, 2);
  EXPECT_FALSE(r.host->expected_toggle(kb.address(), 1, TransferDir::In));
  EXPECT_EQ(r.host->all_keystrokes(), "a");
}

TEST(Host, LateAnswersTimeOutRetryThenAbort) {
  Rig r;
  auto& kb = r.attach<Keyboard>(r.host->id(), 1, Speed::Low, "kb", descriptors::dell_keyboard(),
                                SimTime{1'000'000});
  kb.type("a");
  r.host->start();
  r.sim.run_until(SimTime{30'000'000});
  const auto& recs = r.host->records();
  ASSERT_GE(recs.size(), 3u);
  EXPECT_EQ(recs[0].outcome, Outcome::Timeout);
  EXPECT_EQ(recs[0].host_action, HostAction::Retry);
  EXPECT_EQ(recs[1].host_action, HostAction::Retry);
  EXPECT_EQ(recs[2].host_action, HostAction::Abort);
  EXPECT_GT(r.host->strays(), 0u);
}

TEST(Host, MassStorageReadReturnsTheImageSlice) {
  Rig r;
  std::vector<std::uint8_t> img(16 * kBlockSize);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<std::uint8_t>(i ^ (i >> 9));
  r.attach<MassStorage>(r.host->id(), 1, Speed::High, "msd", img);
  r.host->start();
  r.sim.run_until(SimTime{2'000'000});
  MsdDriver* drv = r.host->msd(1);
  ASSERT_TRUE(drv);
  drv->read10(2, 1500);
  r.sim.run_until(SimTime{10'000'000});
  ASSERT_EQ(drv->transfers().size(), 1u);
  const MsdTransfer& t = drv->transfers()[0];
  EXPECT_TRUE(t.complete);
  EXPECT_FALSE(t.failed);
  const std::vector<std::uint8_t> want(img.begin() + 1024, img.begin() + 1024 + 1500);
  EXPECT_EQ(t.data, want);
  ASSERT_TRUE(t.csw);
  EXPECT_EQ(t.csw->tag, t.cbw.tag);
  EXPECT_EQ(t.data_packets, 3u);
}
