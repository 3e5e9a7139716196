#include "usbinject/host.hpp"

#include <algorithm>

#include "usbinject/device.hpp"
#include "usbinject/error.hpp"
#include "usbinject/hub.hpp"

namespace usbinject {

namespace {

SimTime align_up(SimTime t, SimTime period) {
  const auto n = (t.count() + period.count() - 1) / period.count();
  return SimTime{n * period.count()};
}

bool retryable(Outcome o) { return o == Outcome::Garble || o == Outcome::Timeout; }

}  // namespace

std::string_view enum_phase_name(EnumPhase phase) {
  switch (phase) {
    case EnumPhase::Detached: return "Detached";
    case EnumPhase::Reset: return "Reset";
    case EnumPhase::Default: return "Default";
    case EnumPhase::Addressed: return "Addressed";
    case EnumPhase::Configured: return "Configured";
    case EnumPhase::Refused: return "Refused";
  }
  return "?";
}

Host::Host(std::string name, HostConfig config) : Node(std::move(name)), config_(config) {}

void Host::after(SimTime delay, std::function<void()> fn) {
  sim().call_at(sim().now() + delay, id(), std::move(fn));
}

// --- enumeration ---------------------------------------------------------

void Host::start() {
  enumeration_.clear();
  std::vector<std::pair<NodeId, int>> frontier;
  for (const auto& [port, link_id] : downstream_links()) {
    frontier.emplace_back(sim().link(link_id).downstream, port);
  }
  for (std::size_t i = 0; i < frontier.size(); ++i) {
    const auto [node_id, root_port] = frontier[i];
    Node& n = sim().node(node_id);
    const Link& up = sim().link(n.upstream_link());
    EnumerationState st;
    st.node = node_id;
    st.root_port = root_port;
    st.attachment = sim().node(up.upstream).name() + ":" + std::to_string(up.upstream_port);
    if (auto* hub = dynamic_cast<Hub*>(&n)) {
      st.descriptor = hub->descriptor();
      for (const auto& [port, link_id] : hub->downstream_links()) {
        frontier.emplace_back(sim().link(link_id).downstream, root_port);
      }
    } else if (auto* dev = dynamic_cast<Device*>(&n)) {
      st.descriptor = dev->descriptor();
    } else {
      continue;
    }
    enumeration_.push_back(std::move(st));
  }
  if (!enumeration_.empty()) {
    sim().call_at(sim().now(), id(), [this] { enumeration_step(0, EnumPhase::Reset, 0); });
  }
  if (config_.sof) {
    sim().call_at(align_up(sim().now(), kFrame), id(), [this] { emit_sof(); });
  }
}

void Host::enumeration_step(std::size_t index, EnumPhase next, int attempt) {
  EnumerationState& st = enumeration_.at(index);
  Node& n = sim().node(st.node);
  auto* dev = dynamic_cast<Device*>(&n);
  auto* hub = dynamic_cast<Hub*>(&n);
  const SimTime step = config_.enumeration_step;
  auto then = [this, index, step](EnumPhase phase, int tries) {
    sim().call_at(sim().now() + step, id(),
                  [this, index, phase, tries] { enumeration_step(index, phase, tries); });
  };

  switch (next) {
    case EnumPhase::Reset:
      st.phase = EnumPhase::Reset;
      then(EnumPhase::Default, 0);
      return;
    case EnumPhase::Default:
      st.phase = EnumPhase::Default;
      if (dev != nullptr && !dev->answers_enumeration()) {
        if (attempt + 1 >= config_.enumeration_retries) {
          throw UsbError(Errc::EnumerationTimeout, n.name() + " never answered enumeration");
        }
        then(EnumPhase::Default, attempt + 1);
        return;
      }
      then(EnumPhase::Addressed, 0);
      return;
    case EnumPhase::Addressed: {
      if (next_address_ > 127) {
        throw UsbError(Errc::TopologyInvariantViolation, "address space exhausted");
      }
      st.address = next_address_++;
      st.phase = EnumPhase::Addressed;
      addresses_[st.address] = st.node;
      if (dev != nullptr) dev->set_address(st.address);
      if (hub != nullptr) hub->set_address(st.address);
      then(EnumPhase::Configured, 0);
      return;
    }
    case EnumPhase::Configured:
      configure(st);
      if (index + 1 < enumeration_.size()) {
        sim().call_at(sim().now() + step, id(),
                      [this, index] { enumeration_step(index + 1, EnumPhase::Reset, 0); });
      }
      return;
    case EnumPhase::Detached:
    case EnumPhase::Refused:
      return;
  }
}

void Host::configure(EnumerationState& st) {
  const bool is_hub = st.descriptor.device_class == DeviceClass::Hub;
  if (!is_hub && policy_) {
    const DeviceIdentity ident{st.address, st.descriptor, st.attachment};
    if (policy_->admit(ident) == PolicyAction::Reject) {
      st.phase = EnumPhase::Refused;
      addresses_.erase(st.address);
      if (auto* dev = dynamic_cast<Device*>(&sim().node(st.node))) dev->set_address(0);
      st.address = 0;
      return;
    }
  }
  st.phase = EnumPhase::Configured;
  if (is_hub) {
    for (const auto& hook : configured_hooks_) hook(st);
    return;
  }
  for (const EndpointInfo& ep : st.descriptor.endpoints) {
    if (ep.type != EndpointType::Interrupt || ep.dir != TransferDir::In) continue;
    EndpointSchedule s{st.address, ep.number, ep.dir, ep.type, ep.poll_interval};
    schedules_.push_back(s);
    schedule_poll(s, align_up(sim().now(), kFrame));
  }
  if (st.descriptor.device_class == DeviceClass::MassStorage) {
    msd_[st.address] = std::make_unique<MsdDriver>(*this, st.address);
    if (config_.tur_interval > SimTime{0}) {
      const std::uint8_t addr = st.address;
      auto tick = std::make_shared<std::function<void()>>();
      *tick = [this, addr, weak = std::weak_ptr<std::function<void()>>(tick)] {
        MsdDriver* d = msd(addr);
        if (d != nullptr && !d->busy()) d->test_unit_ready();
        if (auto self = weak.lock()) after(config_.tur_interval, *self);
      };
      tur_ticks_.push_back(tick);
      after(config_.tur_interval, *tick);
    }
  }
  for (const auto& hook : configured_hooks_) hook(st);
}

void Host::schedule_poll(const EndpointSchedule& s, SimTime at) {
  sim().call_at(at, id(), [this, s] {
    const auto key = std::make_pair(s.address, s.endpoint);
    if (!poll_outstanding_[key]) {
      poll_outstanding_[key] = true;
      TransactionRequest r;
      r.pid = PidKind::In;
      r.address = s.address;
      r.endpoint = s.endpoint;
      r.type = s.type;
      r.done = [this, key](const TransactionRecord& rec, Decision d) {
        poll_outstanding_[key] = false;
        deliver_interrupt(rec, d);
      };
      submit(std::move(r));
    }
    const SimTime interval = s.poll_interval > SimTime{0} ? s.poll_interval : kFrame;
    schedule_poll(s, sim().now() + interval);
  });
}

const EnumerationState* Host::state_of(NodeId node) const {
  for (const auto& st : enumeration_) {
    if (st.node == node) return &st;
  }
  return nullptr;
}

const EnumerationState* Host::state_at(std::uint8_t address) const {
  if (address == 0) return nullptr;
  for (const auto& st : enumeration_) {
    if (st.address == address &&
        (st.phase == EnumPhase::Configured || st.phase == EnumPhase::Addressed)) {
      return &st;
    }
  }
  return nullptr;
}

// --- routing ---------------------------------------------------------------

int Host::route_downstream(std::uint8_t address) const {
  auto it = addresses_.find(address);
  if (it == addresses_.end()) {
    throw UsbError(Errc::UnroutablePacket, "no device at address " + std::to_string(address));
  }
  NodeId n = it->second;
  while (true) {
    const LinkId l = sim().node(n).upstream_link();
    if (l == kNoLink) break;
    const Link& link = sim().link(l);
    if (link.upstream == id()) return link.upstream_port;
    n = link.upstream;
  }
  throw UsbError(Errc::UnroutablePacket, "address " + std::to_string(address) + " is detached");
}

std::optional<Host::SplitRoute> Host::split_route(NodeId device) const {
  NodeId n = device;
  while (true) {
    const LinkId l = sim().node(n).upstream_link();
    if (l == kNoLink) return std::nullopt;
    const Link& link = sim().link(l);
    if (link.upstream == id()) return std::nullopt;
    const auto* hub = dynamic_cast<const Hub*>(&sim().node(link.upstream));
    if (hub != nullptr && hub->effective_speed() == Speed::High && is_classic(link.speed)) {
      return SplitRoute{hub->id(), hub->address(), static_cast<std::uint8_t>(link.upstream_port),
                        device_speed(device)};
    }
    n = link.upstream;
  }
}

Speed Host::device_speed(NodeId device) const {
  const Node& n = sim().node(device);
  if (const auto* dev = dynamic_cast<const Device*>(&n)) return dev->speed();
  return sim().link(n.upstream_link()).speed;
}

SimTime Host::timeout_for(Speed speed) const {
  return config_.response_timeout ? *config_.response_timeout : response_timeout(speed);
}

SimTime Host::guard_for(Speed speed) const {
  return config_.guard_gap ? *config_.guard_gap : timeout_for(speed);
}

bool& Host::toggle(std::uint8_t address, std::uint8_t endpoint, TransferDir dir) {
  return toggles_[{address, endpoint, dir}];
}

bool Host::expected_toggle(std::uint8_t address, std::uint8_t endpoint, TransferDir dir) const {
  auto it = toggles_.find({address, endpoint, dir});
  return it != toggles_.end() && it->second;
}

// --- transaction engine ----------------------------------------------------

void Host::submit(TransactionRequest request) {
  queue_.push_back(std::move(request));
  kick();
}

void Host::ping_then_out(std::uint8_t address, std::uint8_t endpoint,
                         std::vector<std::uint8_t> payload,
                         std::function<void(const TransactionRecord&, Decision)> done) {
  auto st = std::make_shared<PingState>();
  st->address = address;
  st->endpoint = endpoint;
  st->payload = std::move(payload);
  st->done = std::move(done);
  ping_step(std::move(st));
}

void Host::ping_step(std::shared_ptr<PingState> st) {
  TransactionRequest r;
  r.pid = PidKind::Ping;
  r.address = st->address;
  r.endpoint = st->endpoint;
  r.type = EndpointType::Bulk;
  r.done = [this, st](const TransactionRecord& rec, Decision d) {
    if (rec.outcome == Outcome::Ack) {
      TransactionRequest out;
      out.pid = PidKind::Out;
      out.address = st->address;
      out.endpoint = st->endpoint;
      out.type = EndpointType::Bulk;
      out.payload = st->payload;
      out.done = st->done;
      submit(std::move(out));
      return;
    }
    if (rec.outcome == Outcome::Nyet || rec.outcome == Outcome::Nak) {
      if (++st->waits > config_.max_ping_nyets) {
        TransactionRecord gave_up = rec;
        gave_up.outcome = Outcome::Timeout;
        gave_up.host_action = HostAction::Abort;
        st->done(gave_up, d);
        return;
      }
      after(config_.ping_backoff, [this, st] { ping_step(st); });
      return;
    }
    st->done(rec, d);
  };
  submit(std::move(r));
}

void Host::kick() {
  if (active_ || queue_.empty() || kick_pending_) return;
  if (sim().now() < next_free_) {
    kick_pending_ = true;
    sim().call_at(next_free_, id(), [this] {
      kick_pending_ = false;
      kick();
    });
    return;
  }
  TransactionRequest r = std::move(queue_.front());
  queue_.pop_front();
  begin(std::move(r));
}

void Host::begin(TransactionRequest request) {
  const int root_port = route_downstream(request.address);
  const NodeId target = addresses_.at(request.address);
  const LinkId link = downstream_link(root_port);

  Active a;
  a.root_port = root_port;
  a.started = sim().now();
  a.token = TokenPacket::make(request.pid, request.address, request.endpoint);
  a.split = split_route(target);
  a.speed = a.split ? Speed::High : device_speed(target);
  a.request = std::move(request);

  const Provenance self{id()};
  SimTime t = sim().now();
  auto send = [&](PacketBody body) {
    const std::size_t len = wire_length(body);
    sim().transmit(link, Direction::Downstream, Packet{std::move(body), a.speed, self, 0}, t);
    t += wire_duration(a.speed, len);
  };
  if (a.split) {
    send(SplitPacket::make(SplitPhase::Start, a.split->hub_address, a.split->port, a.split->speed,
                           a.request.type));
  }
  send(a.token);
  const PidKind pid = a.request.pid;
  if (pid == PidKind::Out || pid == PidKind::Setup) {
    const bool odd = pid == PidKind::Out && toggle(a.token.address, a.token.endpoint, TransferDir::Out);
    send(DataPacket::make(odd ? PidKind::Data1 : PidKind::Data0, a.request.payload));
  }
  a.sent_end = t;
  active_ = std::move(a);

  if (active_->split) {
    // The start-split is not acknowledged; come back for the answer later.
    const SimTime at = align_up(t + guard_for(Speed::High), kMicroframe);
    sim().call_at(at, id(), [this] { send_complete_split(); });
  } else {
    await_response(t + timeout_for(active_->speed));
  }
}

void Host::send_complete_split() {
  if (!active_ || !active_->split) return;
  Active& a = *active_;
  const LinkId link = downstream_link(a.root_port);
  const Provenance self{id()};
  SimTime t = sim().now();
  const PacketBody split = SplitPacket::make(SplitPhase::Complete, a.split->hub_address,
                                             a.split->port, a.split->speed, a.request.type);
  sim().transmit(link, Direction::Downstream, Packet{split, Speed::High, self, 0}, t);
  t += wire_duration(Speed::High, wire_length(split));
  sim().transmit(link, Direction::Downstream, Packet{a.token, Speed::High, self, 0}, t);
  t += wire_duration(Speed::High, wire_length(PacketBody{a.token}));
  a.sent_end = t;
  a.response.reset();
  await_response(t + timeout_for(Speed::High));
}

void Host::await_response(SimTime deadline) {
  active_->awaiting = true;
  active_->timeout = sim().call_at(deadline, id(), [this] { on_response_timeout(); });
}

void Host::on_arrival_start(int port, const Transmission& tx) {
  if (!active_ || !active_->awaiting || active_->response || port != active_->root_port) {
    ++strays_;
    return;
  }
  active_->response = tx.id;
  active_->response_start = sim().now();
  if (active_->timeout) {
    sim().cancel(*active_->timeout);
    active_->timeout.reset();
  }
}

void Host::on_arrival_end(int port, const Transmission& tx) {
  (void)port;
  if (!active_ || !active_->awaiting || active_->response != tx.id) return;
  handle_response(tx);
}

void Host::on_response_timeout() {
  if (!active_ || !active_->awaiting) return;
  active_->timeout.reset();
  TransactionRecord rec;
  rec.token = active_->token;
  rec.attributed_address = active_->token.address;
  rec.outcome = Outcome::Timeout;
  rec.t = active_->started;
  rec.split = active_->split.has_value();
  finish(std::move(rec), std::nullopt);
}

void Host::handle_response(const Transmission& tx) {
  Active& a = *active_;
  a.awaiting = false;
  const PacketBody& body = tx.packet.body;
  const bool split = a.split.has_value();

  if (split && is_handshake(body, PidKind::Nyet)) {
    // Translator still busy on the classic side.
    if (++a.csplit_nyets > config_.max_csplit_nyets) {
      TransactionRecord rec;
      rec.token = a.token;
      rec.response = body;
      rec.attributed_address = a.token.address;
      rec.outcome = Outcome::Timeout;
      rec.t = a.started;
      rec.split = true;
      rec.response_delay = a.response_start - a.sent_end;
      finish(std::move(rec), tx.packet.provenance);
      return;
    }
    const SimTime at = align_up(sim().now() + guard_for(Speed::High), kMicroframe);
    sim().call_at(at, id(), [this] { send_complete_split(); });
    return;
  }

  TransactionRecord rec;
  rec.token = a.token;
  rec.response = body;
  rec.attributed_address = a.token.address;
  rec.t = a.started;
  rec.split = split;
  rec.response_delay = a.response_start - a.sent_end;
  rec.host_action = HostAction::None;

  const PidKind pid = a.token.pid;
  if (const auto* d = as<DataPacket>(body)) {
    rec.outcome = Outcome::Data;
    if (pid == PidKind::In) {
      bool& expected = toggle(a.token.address, a.token.endpoint, TransferDir::In);
      const PidKind want = expected ? PidKind::Data1 : PidKind::Data0;
      if (d->pid == want) {
        rec.delivered = true;
        expected = !expected;
      }
      if (!split) {
        sim().transmit(downstream_link(a.root_port), Direction::Downstream,
                       Packet{HandshakePacket{PidKind::Ack}, a.speed, Provenance{id()}, 0},
                       sim().now());
        rec.host_action = HostAction::AckSent;
      }
    }
  } else if (const auto* h = as<HandshakePacket>(body)) {
    switch (h->pid) {
      case PidKind::Ack: rec.outcome = Outcome::Ack; break;
      case PidKind::Nak: rec.outcome = Outcome::Nak; break;
      case PidKind::Stall: rec.outcome = Outcome::Stall; break;
      case PidKind::Nyet: rec.outcome = Outcome::Nyet; break;
      default: rec.outcome = Outcome::Garble; break;
    }
    // NYET after high-speed OUT data still means the data was taken.
    if (pid == PidKind::Out && (rec.outcome == Outcome::Ack || rec.outcome == Outcome::Nyet)) {
      bool& t = toggle(a.token.address, a.token.endpoint, TransferDir::Out);
      t = !t;
    }
  } else {
    rec.outcome = Outcome::Garble;
  }
  finish(std::move(rec), tx.packet.provenance);
}

void Host::finish(TransactionRecord rec, std::optional<Provenance> origin) {
  Active a = std::move(*active_);
  active_.reset();

  bool retry = false;
  if (retryable(rec.outcome)) {
    retry = a.request.attempts + 1 < config_.max_retries;
    rec.host_action = retry ? HostAction::Retry : HostAction::Abort;
  }

  Decision decision = Decision::Deliver;
  if (rec.response && policy_) {
    const EnumerationState* st = state_at(rec.attributed_address);
    if (st != nullptr) {
      const DeviceIdentity ident{st->address, st->descriptor, st->attachment};
      decision = policy_->apply(rec, &ident);
    } else {
      decision = policy_->apply(rec, nullptr);
    }
    if (decision == Decision::Drop) rec.delivered = false;
  }

  rec.index = records_.size();
  records_.push_back(rec);
  ProvenanceEntry prov;
  prov.origin = origin;
  if (a.split) prov.split_hub = a.split->hub;
  provenance_.push_back(prov);

  next_free_ = sim().now() + guard_for(a.speed);
  if (retry) {
    a.request.attempts += 1;
    queue_.push_front(std::move(a.request));
  } else if (a.request.done) {
    a.request.done(rec, decision);
  }
  kick();
}

// --- drivers ---------------------------------------------------------------

void Host::deliver_interrupt(const TransactionRecord& rec, Decision decision) {
  if (!rec.delivered || decision != Decision::Deliver || rec.outcome != Outcome::Data) return;
  const EnumerationState* st = state_at(rec.attributed_address);
  if (st == nullptr) return;
  const auto* d = as<DataPacket>(*rec.response);
  switch (st->descriptor.device_class) {
    case DeviceClass::HidKeyboard: {
      if (d->payload.size() != 8) return;
      BootReport report{};
      std::copy(d->payload.begin(), d->payload.end(), report.begin());
      keystrokes_[rec.attributed_address] += decoders_[rec.attributed_address].feed(report);
      return;
    }
    case DeviceClass::HidMouse:
      ++mouse_reports_;
      return;
    default:
      return;
  }
}

std::string Host::all_keystrokes() const {
  std::string out;
  for (const auto& [addr, text] : keystrokes_) out += text;
  return out;
}

MsdDriver* Host::msd(std::uint8_t address) {
  auto it = msd_.find(address);
  return it == msd_.end() ? nullptr : it->second.get();
}

void Host::emit_sof() {
  if (!active_ && sim().now() >= next_free_) {
    const PacketBody sof = SofPacket::make(frame_);
    SimTime busy{0};
    for (const auto& [port, link_id] : downstream_links()) {
      const Link& l = sim().link(link_id);
      if (l.speed == Speed::Low) continue;
      sim().transmit(link_id, Direction::Downstream, Packet{sof, l.speed, Provenance{id()}, 0},
                     sim().now());
      busy = std::max(busy, wire_duration(l.speed, wire_length(sof)));
    }
    next_free_ = sim().now() + busy + byte_time(Speed::Full);
  }
  frame_ = static_cast<std::uint16_t>((frame_ + 1) & 0x7FF);
  sim().call_at(sim().now() + kFrame, id(), [this] { emit_sof(); });
}

void MsdDriver::read10(std::uint32_t lba, std::uint32_t length_bytes) {
  enqueue(make_read10(next_tag_++, lba, length_bytes));
}

void MsdDriver::test_unit_ready() { enqueue(make_test_unit_ready(next_tag_++)); }

void MsdDriver::enqueue(Cbw cbw) {
  pending_.push_back(cbw);
  if (!current_) next();
}

void MsdDriver::next() {
  if (pending_.empty()) return;
  current_.emplace();
  current_->cbw = pending_.front();
  pending_.pop_front();
  send_cbw();
}

void MsdDriver::send_cbw() {
  host_.ping_then_out(address_, 2, encode_cbw(current_->cbw),
                      [this](const TransactionRecord& rec, Decision) {
                        if (rec.outcome != Outcome::Ack && rec.outcome != Outcome::Nyet) {
                          finish(true);
                        } else if (current_->cbw.data_transfer_length > 0) {
                          request_data();
                        } else {
                          request_status();
                        }
                      });
}

void MsdDriver::request_data() {
  TransactionRequest r;
  r.pid = PidKind::In;
  r.address = address_;
  r.endpoint = 1;
  r.type = EndpointType::Bulk;
  r.done = [this](const TransactionRecord& rec, Decision d) {
    if (rec.outcome == Outcome::Nak) {
      host_.after(host_.config().nak_backoff, [this] { request_data(); });
      return;
    }
    if (rec.outcome != Outcome::Data || d == Decision::Drop) {
      finish(true);
      return;
    }
    if (!rec.delivered) {  // stale toggle, already seen
      request_data();
      return;
    }
    const auto& payload = as<DataPacket>(*rec.response)->payload;
    current_->data.insert(current_->data.end(), payload.begin(), payload.end());
    ++current_->data_packets;
    if (current_->data.size() >= current_->cbw.data_transfer_length ||
        payload.size() < kHighSpeedBulkMaxPacket) {
      request_status();
    } else {
      request_data();
    }
  };
  host_.submit(std::move(r));
}

void MsdDriver::request_status() {
  TransactionRequest r;
  r.pid = PidKind::In;
  r.address = address_;
  r.endpoint = 1;
  r.type = EndpointType::Bulk;
  r.done = [this](const TransactionRecord& rec, Decision d) {
    if (rec.outcome == Outcome::Nak) {
      host_.after(host_.config().nak_backoff, [this] { request_status(); });
      return;
    }
    if (rec.outcome != Outcome::Data || d == Decision::Drop) {
      finish(true);
      return;
    }
    if (!rec.delivered) {
      request_status();
      return;
    }
    const auto& payload = as<DataPacket>(*rec.response)->payload;
    if (auto csw = parse_csw(payload)) {
      current_->csw = *csw;
      finish(false);
      return;
    }
    // Device sent more data than the CBW asked for.
    current_->data.insert(current_->data.end(), payload.begin(), payload.end());
    ++current_->data_packets;
    request_status();
  };
  host_.submit(std::move(r));
}

void MsdDriver::finish(bool failed) {
  current_->failed = failed;
  current_->complete = !failed;
  done_.push_back(std::move(*current_));
  current_.reset();
  next();
}

}  // namespace usbinject
