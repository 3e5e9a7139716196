#include "usbinject/hub.hpp"

#include <algorithm>

#include "usbinject/error.hpp"

namespace usbinject {

std::string_view tt_mode_name(TtMode mode) {
  return mode == TtMode::SingleTT ? "SingleTT" : "MultiTT";
}

std::optional<TtMode> parse_tt_mode(std::string_view text) {
  if (text == "SingleTT") return TtMode::SingleTT;
  if (text == "MultiTT") return TtMode::MultiTT;
  return std::nullopt;
}

std::string_view collision_policy_name(CollisionPolicy policy) {
  return policy == CollisionPolicy::FirstWins ? "FirstWins" : "GarbleError";
}

std::optional<CollisionPolicy> parse_collision_policy(std::string_view text) {
  if (text == "FirstWins") return CollisionPolicy::FirstWins;
  if (text == "GarbleError") return CollisionPolicy::GarbleError;
  return std::nullopt;
}

Hub::Hub(std::string name, HubConfig config)
    : Node(std::move(name)),
      config_(std::move(config)),
      descriptor_(descriptors::generic_hub(config_.operating_speed)) {
  if (config_.num_ports < 1) {
    throw UsbError(Errc::SchemaViolation, this->name() + ": num_ports must be >= 1");
  }
  tts_.resize(config_.tt_mode == TtMode::MultiTT ? config_.num_ports + 1 : 1);
}

Speed Hub::effective_speed() const {
  if (config_.operating_speed != Speed::High) return Speed::Full;
  if (upstream_link() == kNoLink) return Speed::High;
  return sim().link(upstream_link()).speed == Speed::High ? Speed::High : Speed::Full;
}

Hub::TtState& Hub::tt_for(int port) {
  if (config_.tt_mode == TtMode::SingleTT) return tts_.front();
  return tts_.at(static_cast<std::size_t>(port));
}

SimTime Hub::bias_for(int port) {
  auto it = config_.latency_bias.find(port);
  if (it == config_.latency_bias.end() || it->second <= SimTime{0}) return SimTime{0};
  std::uniform_int_distribution<std::int64_t> dist(0, it->second.count());
  return SimTime{dist(sim().rng())};
}

void Hub::on_arrival_start(int port, const Transmission& tx) {
  if (port == 0) {
    repeat_downstream(tx);
    return;
  }
  const SimTime bias = bias_for(port);
  bias_applied_[tx.id] = bias;
  const bool to_tt = effective_speed() == Speed::High && is_classic(tx.packet.speed);
  const TxId id = tx.id;
  auto handle = [this, port, id, to_tt] {
    if (to_tt) {
      tt_arrival_start(port, id);
    } else {
      const Transmission& t = sim().tx(id);
      offer_upstream(t.packet, id, t.end - t.start);
    }
  };
  if (bias == SimTime{0}) {
    handle();
  } else {
    sim().call_at(sim().now() + bias, this->id(), handle);
  }
}

void Hub::on_arrival_end(int port, const Transmission& tx) {
  if (port == 0) {
    if (effective_speed() == Speed::High) on_split_traffic(tx);
    return;
  }
  SimTime bias{0};
  if (auto it = bias_applied_.find(tx.id); it != bias_applied_.end()) {
    bias = it->second;
    bias_applied_.erase(it);
  }
  if (effective_speed() != Speed::High || !is_classic(tx.packet.speed)) return;
  const TxId id = tx.id;
  if (bias == SimTime{0}) {
    tt_arrival_end(port, id);
  } else {
    sim().call_at(sim().now() + bias, this->id(), [this, port, id] { tt_arrival_end(port, id); });
  }
}

void Hub::repeat_downstream(const Transmission& tx) {
  const Speed eff = effective_speed();
  const Packet& p = tx.packet;
  const SimTime at = sim().now() + config_.repeater_delay;
  for (const auto& [port, link_id] : downstream_links()) {
    const Link& l = sim().link(link_id);
    if (eff == Speed::High) {
      if (p.speed != Speed::High || l.speed != Speed::High) continue;
    } else {
      if (p.speed == Speed::High) continue;
      if (p.speed == Speed::Full && l.speed == Speed::Low) continue;
    }
    sim().transmit(link_id, Direction::Downstream, p, at, tx.id);
  }
}

void Hub::offer_upstream(const Packet& packet, TxId source, SimTime duration) {
  if (upstream_link() == kNoLink) return;
  const SimTime now = sim().now();
  const SimTime end_here = now + duration;
  if (now >= upstream_.busy_until) {
    upstream_ = Arbiter{};
    upstream_.busy_until = end_here;
    // Cut-through copies pay the repeater delay; the hub's own answers do not.
    const SimTime start = source == kNoTx ? now : now + config_.repeater_delay;
    upstream_.forwarded = sim().transmit(upstream_link(), Direction::Upstream, packet, start, source);
    ++counters_.forwarded_upstream;
    return;
  }
  CollisionRecord rec;
  rec.observer = id();
  rec.link = upstream_link();
  rec.first_tx = upstream_.forwarded;
  rec.first = sim().tx(upstream_.forwarded).packet.provenance;
  rec.later_tx = source;
  rec.later = packet.provenance;
  sim().record_collision(rec);
  if (config_.collision_policy == CollisionPolicy::FirstWins) {
    ++counters_.dropped;
    return;
  }
  if (!upstream_.garble_emitted) {
    sim().garble(upstream_.forwarded);
    upstream_.garble_emitted = true;
    ++counters_.garbles;
  } else {
    ++counters_.dropped;
  }
  upstream_.busy_until = std::max(upstream_.busy_until, end_here);
}

void Hub::on_split_traffic(const Transmission& tx) {
  const PacketBody& b = tx.packet.body;
  if (as<SofPacket>(b)) return;
  if (const auto* s = as<SplitPacket>(b)) {
    split_out_.reset();
    if (address_ != 0 && s->hub_address == address_) {
      split_header_ = *s;
    } else {
      split_header_.reset();
    }
    return;
  }
  if (const auto* tok = as<TokenPacket>(b)) {
    split_out_.reset();
    if (!split_header_) return;
    const SplitPacket s = *split_header_;
    split_header_.reset();
    if (s.port < 1 || s.port > config_.num_ports) {
      throw UsbError(Errc::UnknownPort, name() + " has no port " + std::to_string(s.port));
    }
    if (s.phase == SplitPhase::Start) {
      ++counters_.split_starts;
      if (tok->pid == PidKind::Out || tok->pid == PidKind::Setup) {
        split_out_ = std::make_pair(s, *tok);
      } else {
        start_split(s, *tok, std::nullopt);
      }
    } else {
      ++counters_.split_completes;
      complete_split(s, *tok);
    }
    return;
  }
  if (const auto* d = as<DataPacket>(b)) {
    if (split_out_) {
      const auto [s, tok] = *split_out_;
      split_out_.reset();
      start_split(s, tok, *d);
    }
    return;
  }
  split_header_.reset();
  split_out_.reset();
}

std::vector<int> Hub::classic_ports_for(const TtState& tt, Speed speed) const {
  std::vector<int> out;
  for (const auto& [port, link_id] : downstream_links()) {
    const Link& l = sim().link(link_id);
    if (!is_classic(l.speed)) continue;
    if (speed == Speed::Full && l.speed == Speed::Low) continue;
    if (config_.tt_mode == TtMode::MultiTT && port != tt.port) continue;
    out.push_back(port);
  }
  return out;
}

void Hub::start_split(const SplitPacket& split, const TokenPacket& token,
                      const std::optional<DataPacket>& data) {
  TtState& tt = tt_for(split.port);
  if (tt.timeout) sim().cancel(*tt.timeout);
  const std::uint64_t generation = tt.generation + 1;
  tt = TtState{};
  tt.generation = generation;
  tt.phase = TtPhase::Dispatched;
  tt.split = split;
  tt.token = token;
  tt.port = split.port;

  const Speed cs = split.target_speed;
  const Provenance self{id()};
  SimTime at = sim().now() + config_.repeater_delay;
  const std::vector<int> ports = classic_ports_for(tt, cs);
  for (int p : ports) {
    sim().transmit(downstream_link(p), Direction::Downstream, Packet{token, cs, self, 0}, at);
  }
  at += wire_duration(cs, wire_length(token));
  if (data) {
    for (int p : ports) {
      sim().transmit(downstream_link(p), Direction::Downstream, Packet{*data, cs, self, 0}, at);
    }
    at += wire_duration(cs, wire_length(*data));
  }
  const int port = split.port;
  tt.timeout = sim().call_at(at + response_timeout(cs), id(), [this, port, generation] {
    TtState& t = tt_for(port);
    if (t.generation != generation || t.phase != TtPhase::Dispatched) return;
    t.phase = TtPhase::Done;
    t.has_result = false;
    t.timeout.reset();
  });
}

void Hub::tt_arrival_start(int port, TxId id) {
  TtState& tt = tt_for(port);
  const Transmission& t = sim().tx(id);
  if (tt.phase == TtPhase::Dispatched && (config_.tt_mode == TtMode::SingleTT || port == tt.port)) {
    tt.phase = TtPhase::Locked;
    tt.locked = id;
    tt.lock_until = sim().now() + (t.end - t.start);
    if (tt.timeout) {
      sim().cancel(*tt.timeout);
      tt.timeout.reset();
    }
    return;
  }
  if (tt.phase == TtPhase::Locked) {
    sim().record_collision(this->id(), t.link, tt.locked, id);
    tt.collided = true;
    if (config_.collision_policy == CollisionPolicy::FirstWins) ++counters_.dropped;
    return;
  }
  ++counters_.orphan_responses;
}

void Hub::tt_arrival_end(int port, TxId id) {
  TtState& tt = tt_for(port);
  if (tt.phase != TtPhase::Locked || tt.locked != id) return;
  const Transmission& t = sim().tx(id);
  tt.phase = TtPhase::Done;
  tt.has_result = true;
  if ((tt.collided && config_.collision_policy == CollisionPolicy::GarbleError) || t.garbled) {
    tt.result = GarbleIndication{};
    tt.result_provenance = Provenance{this->id()};
    if (tt.collided) ++counters_.garbles;
    return;
  }
  tt.result = t.packet.body;
  tt.result_provenance = t.packet.provenance;
  if (tt.token.pid == PidKind::In && as<DataPacket>(tt.result)) {
    const Speed cs = tt.split.target_speed;
    const SimTime at = sim().now() + byte_time(cs);
    for (int p : classic_ports_for(tt, cs)) {
      sim().transmit(downstream_link(p), Direction::Downstream,
                     Packet{HandshakePacket{PidKind::Ack}, cs, Provenance{this->id()}, 0}, at);
    }
  }
}

void Hub::complete_split(const SplitPacket& split, const TokenPacket& token) {
  TtState& tt = tt_for(split.port);
  if (tt.phase == TtPhase::Idle || tt.port != split.port || tt.token.address != token.address ||
      tt.token.endpoint != token.endpoint) {
    return;
  }
  Packet answer{HandshakePacket{PidKind::Nyet}, Speed::High, Provenance{id()}, 0};
  if (tt.phase == TtPhase::Done) {
    tt.phase = TtPhase::Idle;
    if (!tt.has_result) return;  // classic side never answered: stay silent
    answer.body = tt.result;
    answer.provenance = tt.result_provenance;
  }
  sim().call_at(sim().now() + config_.tt_response_latency, id(), [this, answer] {
    offer_upstream(answer, kNoTx, wire_duration(Speed::High, wire_length(answer.body)));
  });
}

}  // namespace usbinject
