#include <gtest/gtest.h>

#include <random>

#include "nodes.hpp"
#include "usbinject/error.hpp"
#include "usbinject/hub.hpp"

using namespace usbinject;
using testsupport::ScriptedNode;

namespace {

struct Bench {
  explicit Bench(HubConfig config, std::vector<Speed> port_speeds = {Speed::High, Speed::High,
                                                                     Speed::High})
      : sim(1) {
    root = &sim.add_node<ScriptedNode>("root");
    const Speed up = config.operating_speed;
    hub = &sim.add_node<Hub>("hub", std::move(config));
    sim.connect(root->id(), 1, hub->id(), up, kLinkPropagation);
    for (std::size_t i = 0; i < port_speeds.size(); ++i) {
      auto& n = sim.add_node<ScriptedNode>("p" + std::to_string(i + 1));
      sim.connect(hub->id(), static_cast<int>(i + 1), n.id(), port_speeds[i], kLinkPropagation);
      ports.push_back(&n);
    }
    hub->set_address(5);
  }

  std::vector<const Transmission*> upstream() const {
    std::vector<const Transmission*> out;
    const LinkId l = sim.find_link("root:1-hub");
    for (const Transmission& t : sim.transmissions()) {
      if (t.link == l && t.dir == Direction::Upstream) out.push_back(&t);
    }
    return out;
  }

  Simulator sim;
  ScriptedNode* root = nullptr;
  Hub* hub = nullptr;
  std::vector<ScriptedNode*> ports;
};

HubConfig hs_hub(CollisionPolicy policy, TtMode mode = TtMode::SingleTT) {
  HubConfig c;
  c.collision_policy = policy;
  c.tt_mode = mode;
  return c;
}

std::vector<std::uint8_t> random_payload(std::mt19937_64& rng) {
  std::vector<std::uint8_t> p(1 + rng() % 64);
  for (auto& b : p) b = static_cast<std::uint8_t>(rng());
  return p;
}

}  // namespace

TEST(HubCollision, FirstWinsForwardsExactlyTheFirstArrival) {
  std::mt19937_64 rng(2024);
  for (int race = 0; race < 200; ++race) {
    Bench b(hs_hub(CollisionPolicy::FirstWins));
    const auto first_at = SimTime{static_cast<std::int64_t>(rng() % 1000)};
    const int winner = static_cast<int>(rng() % 2);
    const PacketBody win = DataPacket::make(PidKind::Data0, random_payload(rng));
    const PacketBody lose = DataPacket::make(PidKind::Data1, random_payload(rng));
    // anywhere inside the winner's packet; 1 ns after the lock is already too late
    const std::int64_t span = wire_duration(Speed::High, encode(win).size()).count();
    const auto gap = SimTime{1 + static_cast<std::int64_t>(rng() % (span - 1))};
    b.ports[winner]->send_up(first_at, win, Speed::High);
    b.ports[1 - winner]->send_up(first_at + gap, lose, Speed::High);
    b.sim.run_until(SimTime{100'000});

    const auto up = b.upstream();
    ASSERT_EQ(up.size(), 1u) << "race " << race;
    EXPECT_EQ(encode(up[0]->packet.body), encode(win)) << "race " << race;
    EXPECT_EQ(up[0]->packet.provenance.node, b.ports[winner]->id());
    EXPECT_EQ(b.hub->counters().dropped, 1u);
    ASSERT_EQ(b.sim.collisions().size(), 1u);
    EXPECT_EQ(b.sim.collisions()[0].later.node, b.ports[1 - winner]->id());
  }
}

TEST(HubCollision, GarbleErrorPassesNoPayloadAndOneGarblePerEpisode) {
  std::mt19937_64 rng(99);
  for (int race = 0; race < 200; ++race) {
    Bench b(hs_hub(CollisionPolicy::GarbleError));
    const int contenders = 2 + static_cast<int>(rng() % 2);
    SimTime at{static_cast<std::int64_t>(rng() % 1000)};
    for (int i = 0; i < contenders; ++i) {
      b.ports[i]->send_up(at, DataPacket::make(PidKind::Data0, random_payload(rng)), Speed::High);
      at += SimTime{1 + static_cast<std::int64_t>(rng() % 15)};
    }
    b.sim.run_until(SimTime{100'000});

    int garbles = 0;
    for (const Transmission* t : b.upstream()) {
      EXPECT_FALSE(as<DataPacket>(t->packet.body)) << "race " << race;
      if (as<GarbleIndication>(t->packet.body)) ++garbles;
    }
    EXPECT_EQ(garbles, 1) << "race " << race;
    EXPECT_EQ(b.hub->counters().garbles, 1u);
  }
}

TEST(HubCollision, SeparateEpisodesGarbleSeparately) {
  Bench b(hs_hub(CollisionPolicy::GarbleError));
  for (int episode = 0; episode < 3; ++episode) {
    const SimTime at{episode * 50'000};
    b.ports[0]->send_up(at, DataPacket::make(PidKind::Data0, {1, 2, 3, 4}), Speed::High);
    b.ports[1]->send_up(at + SimTime{10}, DataPacket::make(PidKind::Data0, {5, 6}), Speed::High);
  }
  b.sim.run_until(SimTime{200'000});
  EXPECT_EQ(b.hub->counters().garbles, 3u);
}

TEST(HubCollision, SingleResponderPassesUnchanged) {
  for (CollisionPolicy p : {CollisionPolicy::FirstWins, CollisionPolicy::GarbleError}) {
    Bench b(hs_hub(p));
    const PacketBody body = DataPacket::make(PidKind::Data1, {0xde, 0xad});
    b.ports[2]->send_up(SimTime{0}, body, Speed::High);
    b.sim.run_until(SimTime{10'000});
    const auto up = b.upstream();
    ASSERT_EQ(up.size(), 1u);
    EXPECT_EQ(up[0]->packet.body, body);
    EXPECT_EQ(up[0]->start, kLinkPropagation + kHighSpeedRepeaterDelay);
    EXPECT_TRUE(b.sim.collisions().empty());
  }
}

TEST(HubRepeat, HighSpeedTrafficIsBroadcastToHighSpeedPorts) {
  Bench b(hs_hub(CollisionPolicy::FirstWins), {Speed::High, Speed::High, Speed::Low});
  b.root->send_down(SimTime{0}, 1, TokenPacket::make(PidKind::In, 7, 1), Speed::High);
  b.sim.run_until(SimTime{10'000});
  const SimTime expected = kLinkPropagation + kHighSpeedRepeaterDelay + kLinkPropagation;
  ASSERT_EQ(b.ports[0]->starts.size(), 1u);
  ASSERT_EQ(b.ports[1]->starts.size(), 1u);
  EXPECT_EQ(b.ports[0]->starts[0].at, expected);
  EXPECT_EQ(b.ports[1]->starts[0].at, expected);
  EXPECT_TRUE(b.ports[2]->starts.empty());
}

TEST(HubRepeat, ClassicHubRepeatsEverythingToEveryPort) {
  HubConfig c;
  c.operating_speed = Speed::Full;
  c.repeater_delay = kClassicRepeaterDelay;
  Bench b(c, {Speed::Full, Speed::Full, Speed::Full});
  b.root->send_down(SimTime{0}, 1, TokenPacket::make(PidKind::In, 7, 1), Speed::Full);
  b.sim.run_until(SimTime{100'000});
  for (ScriptedNode* p : b.ports) EXPECT_EQ(p->starts.size(), 1u);
}

namespace {

void send_split(Bench& b, SimTime at, SplitPhase phase, int port, const TokenPacket& token) {
  const PacketBody split =
      SplitPacket::make(phase, 5, static_cast<std::uint8_t>(port), Speed::Low, EndpointType::Interrupt);
  b.root->send_down(at, 1, split, Speed::High);
  b.root->send_down(at + wire_duration(Speed::High, wire_length(split)), 1, token, Speed::High);
}

std::size_t tokens_seen(const Simulator& sim, const ScriptedNode& n) {
  std::size_t count = 0;
  for (const auto& a : n.ends) {
    if (as<TokenPacket>(sim.tx(a.tx).packet.body)) ++count;
  }
  return count;
}

}  // namespace

TEST(HubTt, SingleTtBroadcastsTranslatedTokenToAllClassicPorts) {
  Bench b(hs_hub(CollisionPolicy::FirstWins, TtMode::SingleTT), {Speed::Low, Speed::Low, Speed::High});
  send_split(b, SimTime{0}, SplitPhase::Start, 2, TokenPacket::make(PidKind::In, 9, 1));
  b.sim.run_until(SimTime{100'000});
  EXPECT_EQ(tokens_seen(b.sim, *b.ports[0]), 1u);
  EXPECT_EQ(tokens_seen(b.sim, *b.ports[1]), 1u);
  EXPECT_EQ(b.sim.tx(b.ports[1]->ends[0].tx).packet.speed, Speed::Low);
}

TEST(HubTt, MultiTtSendsTranslatedTokenOnlyToTheNamedPort) {
  Bench b(hs_hub(CollisionPolicy::FirstWins, TtMode::MultiTT), {Speed::Low, Speed::Low, Speed::High});
  send_split(b, SimTime{0}, SplitPhase::Start, 2, TokenPacket::make(PidKind::In, 9, 1));
  b.sim.run_until(SimTime{100'000});
  EXPECT_EQ(tokens_seen(b.sim, *b.ports[0]), 0u);
  EXPECT_EQ(tokens_seen(b.sim, *b.ports[1]), 1u);
}

TEST(HubTt, SplitNamingAMissingPortThrows) {
  Bench b(hs_hub(CollisionPolicy::FirstWins));
  send_split(b, SimTime{0}, SplitPhase::Start, 9, TokenPacket::make(PidKind::In, 9, 1));
  try {
    b.sim.run_until(SimTime{100'000});
    FAIL();
  } catch (const UsbError& e) {
    EXPECT_EQ(e.code(), Errc::UnknownPort);
  }
}

namespace {

// Start-split to port 2, both classic ports answer, then a complete-split.
std::vector<PacketBody> tt_race(Bench& b) {
  b.ports[0]->reply = std::make_pair(SimTime{500}, PacketBody{DataPacket::make(PidKind::Data0, {0xAA})});
  b.ports[1]->reply = std::make_pair(SimTime{3000}, PacketBody{DataPacket::make(PidKind::Data0, {0xBB})});
  const TokenPacket in = TokenPacket::make(PidKind::In, 9, 1);
  send_split(b, SimTime{0}, SplitPhase::Start, 2, in);
  b.sim.run_until(SimTime{200'000});
  b.ports[0]->reply.reset();
  b.ports[1]->reply.reset();
  send_split(b, SimTime{200'000}, SplitPhase::Complete, 2, in);
  b.sim.run_until(SimTime{400'000});
  std::vector<PacketBody> up;
  for (const Transmission* t : b.upstream()) up.push_back(t->packet.body);
  return up;
}

}  // namespace

TEST(HubTt, FirstWinsTranslatorHandsOverTheFirstAnswer) {
  Bench b(hs_hub(CollisionPolicy::FirstWins), {Speed::Low, Speed::Low});
  const auto up = tt_race(b);
  ASSERT_EQ(up.size(), 1u);
  const auto* d = as<DataPacket>(up[0]);
  ASSERT_TRUE(d);
  EXPECT_EQ(d->payload, (std::vector<std::uint8_t>{0xAA}));
  EXPECT_EQ(b.sim.collisions().size(), 1u);
}

TEST(HubTt, GarbleErrorTranslatorAnswersSplitErr) {
  Bench b(hs_hub(CollisionPolicy::GarbleError), {Speed::Low, Speed::Low});
  const auto up = tt_race(b);
  ASSERT_EQ(up.size(), 1u);
  EXPECT_TRUE(as<GarbleIndication>(up[0]));
  EXPECT_EQ(b.hub->counters().garbles, 1u);
}

TEST(HubTt, UnsolicitedClassicResponseIsAnOrphan) {
  Bench b(hs_hub(CollisionPolicy::FirstWins), {Speed::Low, Speed::Low});
  b.ports[0]->send_up(SimTime{0}, HandshakePacket{PidKind::Nak}, Speed::Low);
  b.sim.run_until(SimTime{100'000});
  EXPECT_EQ(b.hub->counters().orphan_responses, 1u);
  EXPECT_TRUE(b.upstream().empty());
}
