#pragma once

// Bare nodes for driving hubs and devices without a host.

#include <optional>
#include <string>
#include <vector>

#include "usbinject/sim.hpp"

namespace usbinject::testsupport {

struct Arrival {
  int port = 0;
  TxId tx = kNoTx;
  SimTime at{0};
};

class ScriptedNode : public Node {
 public:
  using Node::Node;

  Simulator& simulator() const { return sim(); }

  /// Put a packet on the upstream link, starting at t.
  TxId send_up(SimTime t, PacketBody body, Speed speed) {
    return sim().transmit(upstream_link(), Direction::Upstream,
                          Packet{std::move(body), speed, Provenance{id()}, 0}, t);
  }
  TxId send_down(SimTime t, int port, PacketBody body, Speed speed) {
    return sim().transmit(downstream_link(port), Direction::Downstream,
                          Packet{std::move(body), speed, Provenance{id()}, 0}, t);
  }

  // When set, answer every token arriving from upstream after the delay.
  std::optional<std::pair<SimTime, PacketBody>> reply;
  Speed reply_speed = Speed::Low;

  std::vector<Arrival> starts;
  std::vector<Arrival> ends;

  void on_arrival_start(int port, const Transmission& tx) override {
    starts.push_back({port, tx.id, sim().now()});
  }
  void on_arrival_end(int port, const Transmission& tx) override {
    ends.push_back({port, tx.id, sim().now()});
    if (port == 0 && reply && as<TokenPacket>(tx.packet.body)) {
      send_up(sim().now() + reply->first, reply->second, reply_speed);
    }
  }
};

}  // namespace usbinject::testsupport
