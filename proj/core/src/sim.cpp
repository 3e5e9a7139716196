#include "usbinject/sim.hpp"

#include <algorithm>

#include "usbinject/error.hpp"

namespace usbinject {

std::int64_t bit_rate_bps(Speed speed) {
  switch (speed) {
    case Speed::Low: return 1'500'000;
    case Speed::Full: return 12'000'000;
    case Speed::High: return 480'000'000;
  }
  return 1;
}

SimTime wire_duration(Speed speed, std::size_t bytes) {
  const std::int64_t bits_e9 = static_cast<std::int64_t>(bytes) * 8 * 1'000'000'000LL;
  const std::int64_t rate = bit_rate_bps(speed);
  return SimTime{(bits_e9 + rate - 1) / rate};
}

std::string_view direction_name(Direction dir) {
  return dir == Direction::Upstream ? "up" : "down";
}

LinkId Node::downstream_link(int port) const {
  auto it = downstream_links_.find(port);
  return it == downstream_links_.end() ? kNoLink : it->second;
}

void Simulator::adopt(std::unique_ptr<Node> node) {
  node->id_ = static_cast<NodeId>(nodes_.size());
  node->sim_ = this;
  nodes_.push_back(std::move(node));
}

LinkId Simulator::connect(NodeId parent, int port, NodeId child, Speed speed,
                          SimTime propagation) {
  Node& p = node(parent);
  Node& c = node(child);
  if (p.downstream_links_.count(port)) {
    throw UsbError(Errc::TopologyInvariantViolation,
                   p.name() + " port " + std::to_string(port) + " already used");
  }
  if (c.upstream_link_ != kNoLink) {
    throw UsbError(Errc::TopologyInvariantViolation, c.name() + " already has a parent");
  }
  Link l;
  l.id = static_cast<LinkId>(links_.size());
  l.upstream = parent;
  l.upstream_port = port;
  l.downstream = child;
  l.speed = speed;
  l.propagation = propagation;
  l.name = p.name() + ":" + std::to_string(port) + "-" + c.name();
  p.downstream_links_[port] = l.id;
  c.upstream_link_ = l.id;
  links_.push_back(std::move(l));
  return links_.back().id;
}

LinkId Simulator::find_link(std::string_view name) const {
  for (const Link& l : links_) {
    if (l.name == name) return l.id;
  }
  throw UsbError(Errc::UnknownLink, std::string(name));
}

std::uint64_t Simulator::push(Event ev) {
  ev.seq = next_seq_++;
  const std::uint64_t seq = ev.seq;
  queue_.push(std::move(ev));
  return seq;
}

EventHandle Simulator::call_at(SimTime at, NodeId owner, std::function<void()> fn) {
  if (at < now_) {
    throw UsbError(Errc::PastEvent, "at=" + std::to_string(at.count()) +
                                        " now=" + std::to_string(now_.count()));
  }
  return EventHandle{push(Event{at, 0, EventKind::TimerFire, owner, 0, kNoTx, std::move(fn)})};
}

void Simulator::cancel(EventHandle handle) {
  auto it = std::lower_bound(cancelled_.begin(), cancelled_.end(), handle.seq);
  if (it == cancelled_.end() || *it != handle.seq) cancelled_.insert(it, handle.seq);
}

TxId Simulator::transmit(LinkId link_id, Direction dir, Packet packet, SimTime start,
                         TxId repeat_of) {
  if (start < now_) {
    throw UsbError(Errc::PastEvent, "transmit start before now");
  }
  const Link& l = link(link_id);
  Transmission t;
  t.id = static_cast<TxId>(txs_.size());
  t.link = link_id;
  t.dir = dir;
  packet.timestamp_ns = start.count();
  t.start = start;
  t.end = start + wire_duration(packet.speed, wire_length(packet.body));
  t.packet = std::move(packet);
  t.repeat_of = repeat_of;
  txs_.push_back(std::move(t));
  Transmission& added = txs_.back();
  const TxId id = added.id;
  if (repeat_of != kNoTx) txs_.at(repeat_of).repeats.push_back(id);

  // Overlap on this link direction. Only the last few can still be in flight.
  auto& recent = in_flight_[{link_id, dir}];
  for (auto it = recent.rbegin(); it != recent.rend() && it - recent.rbegin() < 8; ++it) {
    Transmission& other = txs_.at(*it);
    if (other.start < added.end && added.start < other.end) {
      other.collided = true;
      txs_.at(id).collided = true;
      const bool other_first = other.start <= txs_.at(id).start;
      record_collision(dir == Direction::Upstream ? l.upstream : l.downstream, link_id,
                       other_first ? other.id : id, other_first ? id : other.id);
    }
  }
  recent.push_back(id);
  if (recent.size() > 64) recent.erase(recent.begin(), recent.begin() + 32);

  const NodeId receiver = dir == Direction::Upstream ? l.upstream : l.downstream;
  const int port = dir == Direction::Upstream ? l.upstream_port : 0;
  const Transmission& t2 = txs_.at(id);
  push(Event{t2.start + l.propagation, 0, EventKind::PacketArrivalStart, receiver, port, id, {}});
  push(Event{t2.end + l.propagation, 0, EventKind::PacketArrivalEnd, receiver, port, id, {}});
  return id;
}

void Simulator::garble(TxId id) {
  Transmission& t = txs_.at(id);
  if (t.garbled) return;
  t.garbled = true;
  t.packet.body = GarbleIndication{};
  const std::vector<TxId> repeats = t.repeats;
  for (TxId r : repeats) garble(r);
}

void Simulator::record_collision(NodeId observer, LinkId link_id, TxId first, TxId later) {
  CollisionRecord c;
  c.at = now_;
  c.observer = observer;
  c.link = link_id;
  c.first_tx = first;
  c.later_tx = later;
  c.first = txs_.at(first).packet.provenance;
  c.later = txs_.at(later).packet.provenance;
  collisions_.push_back(c);
}

void Simulator::record_collision(CollisionRecord rec) {
  rec.at = now_;
  collisions_.push_back(rec);
}

void Simulator::add_tap(LinkId link_id, Tap tap) {
  (void)link(link_id);
  taps_[link_id].push_back(std::move(tap));
}

void Simulator::dispatch(const Event& ev) {
  switch (ev.kind) {
    case EventKind::TimerFire:
      ev.fn();
      break;
    case EventKind::PacketArrivalStart:
      nodes_.at(ev.target)->on_arrival_start(ev.port, txs_.at(ev.tx));
      break;
    case EventKind::PacketArrivalEnd: {
      const Transmission& t = txs_.at(ev.tx);
      if (auto it = taps_.find(t.link); it != taps_.end()) {
        for (const Tap& tap : it->second) tap(t);
      }
      nodes_.at(ev.target)->on_arrival_end(ev.port, txs_.at(ev.tx));
      break;
    }
  }
}

std::size_t Simulator::run_until(SimTime t) {
  std::size_t processed = 0;
  while (!queue_.empty() && queue_.top().at <= t) {
    Event ev = queue_.top();
    queue_.pop();
    auto it = std::lower_bound(cancelled_.begin(), cancelled_.end(), ev.seq);
    if (it != cancelled_.end() && *it == ev.seq) {
      cancelled_.erase(it);
      continue;
    }
    now_ = ev.at;
    if (log_events_) event_log_.push_back(LoggedEvent{ev.at, ev.seq, ev.kind, ev.target, ev.tx});
    dispatch(ev);
    ++processed;
  }
  if (t > now_) now_ = t;
  return processed;
}

}  // namespace usbinject
