#pragma once

// Discrete-event engine. Nodes exchange Transmissions over Links; a receiver sees
// PacketArrivalStart when the first bit lands and PacketArrivalEnd when the last
// one does. Repeaters (hubs) forward cut-through at arrival start, so a forwarded
// copy keeps a back-pointer to its source and inherits a later garble.

#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include "usbinject/packet.hpp"

namespace usbinject {

using SimTime = std::chrono::nanoseconds;
using NodeId = std::uint32_t;
using LinkId = std::uint32_t;
using TxId = std::uint32_t;

inline constexpr NodeId kNoNode = 0xFFFFFFFFu;
inline constexpr LinkId kNoLink = 0xFFFFFFFFu;
inline constexpr TxId kNoTx = 0xFFFFFFFFu;

std::int64_t bit_rate_bps(Speed speed);
/// ceil(bytes * 8e9 / bit rate). No SYNC/EOP overhead.
SimTime wire_duration(Speed speed, std::size_t bytes);
inline SimTime byte_time(Speed speed) { return wire_duration(speed, 1); }

/// How long a receiver waits for a reply to start: 16 byte-times plus a fixed
/// 50 us allowance for hub repeater chains.
inline SimTime response_timeout(Speed speed) { return 16 * byte_time(speed) + SimTime{50'000}; }

enum class Direction : std::uint8_t { Upstream, Downstream };
std::string_view direction_name(Direction dir);

struct Link {
  LinkId id = kNoLink;
  NodeId upstream = kNoNode;
  int upstream_port = 0;
  NodeId downstream = kNoNode;
  Speed speed = Speed::High;
  SimTime propagation{0};
  std::string name;  // "<parent>:<port>-<child>"
};

struct Transmission {
  TxId id = kNoTx;
  LinkId link = kNoLink;
  Direction dir = Direction::Downstream;
  Packet packet;
  SimTime start{0};  // at the sender
  SimTime end{0};
  TxId repeat_of = kNoTx;
  std::vector<TxId> repeats;
  bool collided = false;
  bool garbled = false;
};

/// Two transmissions overlapped where only one can pass. Written either by the
/// link layer (same link, same direction) or by a hub arbiter.
struct CollisionRecord {
  SimTime at{0};
  NodeId observer = kNoNode;
  LinkId link = kNoLink;
  TxId first_tx = kNoTx;
  TxId later_tx = kNoTx;
  Provenance first;
  Provenance later;
};

enum class EventKind : std::uint8_t { PacketArrivalStart, PacketArrivalEnd, TimerFire };

struct LoggedEvent {
  SimTime at{0};
  std::uint64_t seq = 0;
  EventKind kind = EventKind::TimerFire;
  NodeId target = kNoNode;
  TxId tx = kNoTx;
  bool operator==(const LoggedEvent&) const = default;
};

struct EventHandle {
  std::uint64_t seq = 0;
};

enum class NodeKind : std::uint8_t { Host, Hub, Device, Other };

class Simulator;

class Node {
 public:
  explicit Node(std::string name) : name_(std::move(name)) {}
  virtual ~Node() = default;
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  NodeId id() const { return id_; }
  const std::string& name() const { return name_; }
  virtual NodeKind kind() const { return NodeKind::Other; }

  LinkId upstream_link() const { return upstream_link_; }
  const std::map<int, LinkId>& downstream_links() const { return downstream_links_; }
  LinkId downstream_link(int port) const;

  // port 0 is the upstream side; 1..n are downstream ports.
  virtual void on_arrival_start(int port, const Transmission& tx) {
    (void)port;
    (void)tx;
  }
  virtual void on_arrival_end(int port, const Transmission& tx) {
    (void)port;
    (void)tx;
  }

 protected:
  Simulator& sim() const { return *sim_; }

 private:
  friend class Simulator;
  std::string name_;
  NodeId id_ = kNoNode;
  Simulator* sim_ = nullptr;
  LinkId upstream_link_ = kNoLink;
  std::map<int, LinkId> downstream_links_;
};

class Simulator {
 public:
  using Tap = std::function<void(const Transmission&)>;

  explicit Simulator(std::uint64_t seed = 0) : rng_(seed) {}

  template <class T, class... Args>
  T& add_node(Args&&... args) {
    auto node = std::make_unique<T>(std::forward<Args>(args)...);
    T& ref = *node;
    adopt(std::move(node));
    return ref;
  }

  LinkId connect(NodeId parent, int port, NodeId child, Speed speed, SimTime propagation);

  Node& node(NodeId id) const { return *nodes_.at(id); }
  std::size_t node_count() const { return nodes_.size(); }
  const Link& link(LinkId id) const { return links_.at(id); }
  const std::vector<Link>& links() const { return links_; }
  /// Throws UsbError(UnknownLink).
  LinkId find_link(std::string_view name) const;

  SimTime now() const { return now_; }

  /// Throws UsbError(PastEvent) when at < now.
  EventHandle call_at(SimTime at, NodeId owner, std::function<void()> fn);
  void cancel(EventHandle handle);

  TxId transmit(LinkId link, Direction dir, Packet packet, SimTime start, TxId repeat_of = kNoTx);
  /// Replaces the content with a garble indication, here and in every
  /// cut-through copy made from it.
  void garble(TxId tx);
  void record_collision(NodeId observer, LinkId link, TxId first, TxId later);
  /// For arbiters whose losing contender never made it onto a link.
  void record_collision(CollisionRecord rec);

  const Transmission& tx(TxId id) const { return txs_.at(id); }
  // Deque storage keeps references handed to handlers valid while they transmit.
  const std::deque<Transmission>& transmissions() const { return txs_; }
  const std::vector<CollisionRecord>& collisions() const { return collisions_; }

  void add_tap(LinkId link, Tap tap);

  std::size_t run_until(SimTime t);

  void enable_event_log(bool on) { log_events_ = on; }
  const std::vector<LoggedEvent>& event_log() const { return event_log_; }

  std::mt19937_64& rng() { return rng_; }

 private:
  struct Event {
    SimTime at;
    std::uint64_t seq;
    EventKind kind;
    NodeId target;
    int port;
    TxId tx;
    std::function<void()> fn;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.at != b.at ? a.at > b.at : a.seq > b.seq;
    }
  };

  void adopt(std::unique_ptr<Node> node);
  std::uint64_t push(Event ev);
  void dispatch(const Event& ev);

  std::vector<std::unique_ptr<Node>> nodes_;
  std::vector<Link> links_;
  std::deque<Transmission> txs_;
  std::map<std::pair<LinkId, Direction>, std::vector<TxId>> in_flight_;
  std::map<LinkId, std::vector<Tap>> taps_;
  std::vector<CollisionRecord> collisions_;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::vector<std::uint64_t> cancelled_;  // sorted
  std::uint64_t next_seq_ = 0;
  SimTime now_{0};
  bool log_events_ = false;
  std::vector<LoggedEvent> event_log_;
  std::mt19937_64 rng_;
};

}  // namespace usbinject
