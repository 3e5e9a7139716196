#include "usbinject/device.hpp"

#include <algorithm>

#include "usbinject/error.hpp"

namespace usbinject {

Device::Device(std::string name, DeviceDescriptor descriptor, SimTime latency, AddressCheck check)
    : Node(std::move(name)), descriptor_(std::move(descriptor)), latency_(latency), check_(check) {}

Speed Device::speed() const {
  if (upstream_link() == kNoLink) return descriptor_.speed;
  return sim().link(upstream_link()).speed;
}

void Device::respond(PacketBody body) {
  if (upstream_link() == kNoLink) return;
  sim().transmit(upstream_link(), Direction::Upstream,
                 Packet{std::move(body), speed(), Provenance{id()}, 0}, sim().now() + latency_);
}

std::optional<PacketBody> Device::handle_in(std::uint8_t endpoint) {
  (void)endpoint;
  return HandshakePacket{PidKind::Nak};
}

std::optional<PacketBody> Device::handle_out(std::uint8_t endpoint, const DataPacket& data) {
  (void)endpoint;
  (void)data;
  return HandshakePacket{PidKind::Ack};
}

std::optional<PacketBody> Device::handle_ping(std::uint8_t endpoint) {
  (void)endpoint;
  return HandshakePacket{PidKind::Ack};
}

std::optional<PacketBody> Device::handle_foreign_ep1(const TokenPacket& token) {
  (void)token;
  return std::nullopt;
}

void Device::on_arrival_end(int port, const Transmission& tx) {
  if (port != 0) return;
  const Packet& p = tx.packet;
  if (p.speed != speed()) return;
  observe(p.body);
  if (as<SofPacket>(p.body)) return;

  if (awaiting_commit_) {
    const std::uint8_t ep = *awaiting_commit_;
    awaiting_commit_.reset();
    if (is_handshake(p.body, PidKind::Ack)) data_committed(ep);
  }

  if (const auto* tok = as<TokenPacket>(p.body)) {
    pending_out_.reset();
    if (!tok->crc_valid()) return;
    const bool own = tok->address == address_;
    if (check_ == AddressCheck::PromiscuousEp1 && tok->endpoint == 1) {
      if (own) {
        if (tok->pid == PidKind::In) respond(HandshakePacket{PidKind::Nak});
        return;
      }
      if (tok->pid == PidKind::In) {
        if (auto r = handle_foreign_ep1(*tok)) respond(std::move(*r));
      }
      return;
    }
    if (!own) return;
    switch (tok->pid) {
      case PidKind::In:
        if (auto r = handle_in(tok->endpoint)) {
          if (as<DataPacket>(*r)) awaiting_commit_ = tok->endpoint;
          respond(std::move(*r));
        }
        break;
      case PidKind::Out:
      case PidKind::Setup:
        pending_out_ = *tok;
        break;
      case PidKind::Ping:
        if (auto r = handle_ping(tok->endpoint)) respond(std::move(*r));
        break;
      default:
        break;
    }
    return;
  }
  if (const auto* data = as<DataPacket>(p.body)) {
    if (!pending_out_) return;
    const TokenPacket tok = *pending_out_;
    pending_out_.reset();
    if (auto r = handle_out(tok.endpoint, *data)) respond(std::move(*r));
    return;
  }
  pending_out_.reset();
}

// Keyboard

Keyboard::Keyboard(std::string name, DeviceDescriptor descriptor, SimTime latency)
    : Device(std::move(name), std::move(descriptor), latency) {}

void Keyboard::type(std::string_view text) {
  for (const BootReport& r : reports_for_text(text)) reports_.push_back(r);
}

void Keyboard::press(std::uint8_t modifiers, std::span<const std::uint8_t> keys) {
  reports_.push_back(make_report(modifiers, keys));
  reports_.push_back(BootReport{});
}

std::optional<PacketBody> Keyboard::handle_in(std::uint8_t endpoint) {
  if (endpoint != 1 || reports_.empty()) return HandshakePacket{PidKind::Nak};
  const BootReport& r = reports_.front();
  return DataPacket::make(toggle_ ? PidKind::Data1 : PidKind::Data0, {r.begin(), r.end()});
}

void Keyboard::data_committed(std::uint8_t endpoint) {
  if (endpoint != 1 || reports_.empty()) return;
  reports_.pop_front();
  toggle_ = !toggle_;
  ++committed_;
}

Mouse::Mouse(std::string name, DeviceDescriptor descriptor, SimTime latency)
    : Device(std::move(name), std::move(descriptor), latency) {}

// Mass storage

MassStorage::MassStorage(std::string name, std::vector<std::uint8_t> image,
                         DeviceDescriptor descriptor, SimTime latency)
    : Device(std::move(name), std::move(descriptor), latency), image_(std::move(image)) {}

std::optional<PacketBody> MassStorage::handle_ping(std::uint8_t endpoint) {
  if (endpoint != 2) return HandshakePacket{PidKind::Stall};
  return HandshakePacket{phase_ == Phase::Idle ? PidKind::Ack : PidKind::Nak};
}

std::optional<PacketBody> MassStorage::handle_out(std::uint8_t endpoint, const DataPacket& data) {
  if (endpoint != 2) return HandshakePacket{PidKind::Stall};
  if (phase_ != Phase::Idle) return HandshakePacket{PidKind::Nak};
  Cbw cbw;
  try {
    cbw = parse_cbw(data.payload);
  } catch (const UsbError&) {
    stalled_ = true;
    return HandshakePacket{PidKind::Stall};
  }
  stalled_ = false;
  ++cbws_;
  csw_ = Csw{cbw.tag, cbw.data_transfer_length, 0};
  data_.clear();
  offset_ = 0;
  switch (cbw.opcode()) {
    case kOpRead10: {
      const std::size_t span_bytes = std::size_t{cbw.read10_blocks()} * kBlockSize;
      const std::size_t served = std::min<std::size_t>(cbw.data_transfer_length, span_bytes);
      const std::size_t from = std::size_t{cbw.read10_lba()} * kBlockSize;
      data_.assign(served, 0);
      if (from < image_.size()) {
        const std::size_t n = std::min(served, image_.size() - from);
        std::copy_n(image_.begin() + static_cast<std::ptrdiff_t>(from), n, data_.begin());
      }
      csw_.residue = static_cast<std::uint32_t>(cbw.data_transfer_length - served);
      phase_ = data_.empty() ? Phase::StatusPending : Phase::DataIn;
      break;
    }
    case kOpTestUnitReady:
      phase_ = Phase::StatusPending;
      break;
    default:
      csw_.status = 1;
      phase_ = Phase::StatusPending;
      break;
  }
  return HandshakePacket{PidKind::Ack};
}

std::optional<PacketBody> MassStorage::handle_in(std::uint8_t endpoint) {
  if (endpoint != 1) return HandshakePacket{PidKind::Stall};
  if (stalled_) return HandshakePacket{PidKind::Stall};
  const PidKind pid = toggle_in_ ? PidKind::Data1 : PidKind::Data0;
  switch (phase_) {
    case Phase::DataIn: {
      in_flight_ = std::min(kBlockSize, data_.size() - offset_);
      const auto first = data_.begin() + static_cast<std::ptrdiff_t>(offset_);
      return DataPacket::make(pid, {first, first + static_cast<std::ptrdiff_t>(in_flight_)});
    }
    case Phase::StatusPending:
      return DataPacket::make(pid, encode_csw(csw_));
    case Phase::Idle:
      break;
  }
  return HandshakePacket{PidKind::Nak};
}

void MassStorage::data_committed(std::uint8_t endpoint) {
  if (endpoint != 1) return;
  toggle_in_ = !toggle_in_;
  ++committed_;
  if (phase_ == Phase::DataIn) {
    offset_ += in_flight_;
    if (offset_ >= data_.size()) phase_ = Phase::StatusPending;
  } else if (phase_ == Phase::StatusPending) {
    phase_ = Phase::Idle;
  }
}

// Injector

std::string_view injector_mode_name(InjectorMode mode) {
  switch (mode) {
    case InjectorMode::Idle: return "Idle";
    case InjectorMode::KeystrokeInject: return "KeystrokeInject";
    case InjectorMode::DosNak: return "DosNak";
    case InjectorMode::FileHijack: return "FileHijack";
    case InjectorMode::BootHijack: return "BootHijack";
  }
  return "?";
}

std::optional<InjectorMode> parse_injector_mode(std::string_view text) {
  for (InjectorMode m : {InjectorMode::Idle, InjectorMode::KeystrokeInject, InjectorMode::DosNak,
                         InjectorMode::FileHijack, InjectorMode::BootHijack}) {
    if (injector_mode_name(m) == text) return m;
  }
  return std::nullopt;
}

Injector::Injector(std::string name, DeviceDescriptor persona, InjectorConfig config,
                   SimTime latency)
    : Device(std::move(name), std::move(persona), latency, AddressCheck::PromiscuousEp1),
      config_(std::move(config)) {}

bool Injector::active() const {
  const SimTime now = sim().now();
  if (now < config_.active_from) return false;
  return !config_.active_until || now < *config_.active_until;
}

PidKind Injector::next_toggle_pid() {
  const PidKind pid = victim_toggle_ ? PidKind::Data1 : PidKind::Data0;
  // Nobody ACKs a complete-split answer, so assume it landed.
  if (current_split_ == SplitPhase::Complete) victim_toggle_ = !victim_toggle_;
  return pid;
}

PacketBody Injector::offer(PacketBody body, std::function<void()> commit) {
  ++counters_.data_injected;
  if (current_split_ == SplitPhase::Complete) {
    commit();
    return body;
  }
  unacked_ = body;
  on_ack_ = std::move(commit);
  return body;
}

void Injector::observe(const PacketBody& body) {
  if (as<SofPacket>(body)) return;
  if (const auto* s = as<SplitPacket>(body)) {
    split_before_token_ = s->phase;
    return;
  }
  if (const auto* tok = as<TokenPacket>(body)) {
    current_split_ = split_before_token_;
    split_before_token_.reset();
    expecting_ack_ = false;
    out_to_victim_ = false;
    if (!victim_ || tok->address != *victim_) return;
    if (tok->endpoint == 1 && tok->pid == PidKind::In && current_split_ != SplitPhase::Start) {
      expecting_ack_ = current_split_ != SplitPhase::Complete;
      if (boot_armed_) ++boot_count_;
    }
    if (tok->endpoint == 2 && tok->pid == PidKind::Out) out_to_victim_ = true;
    if (tok->endpoint == 2 && tok->pid == PidKind::Ping && tur_ack_pending_ && active()) {
      ++counters_.acks_injected;
      respond(HandshakePacket{PidKind::Ack});
    }
    return;
  }
  split_before_token_.reset();
  if (is_handshake(body, PidKind::Ack)) {
    if (expecting_ack_) {
      victim_toggle_ = !victim_toggle_;
      if (unacked_) {
        unacked_.reset();
        std::function<void()> commit = std::move(on_ack_);
        on_ack_ = nullptr;
        commit();
      }
    }
    expecting_ack_ = false;
    return;
  }
  expecting_ack_ = false;
  const auto* data = as<DataPacket>(body);
  if (!data || !out_to_victim_) return;
  out_to_victim_ = false;
  Cbw cbw;
  try {
    cbw = parse_cbw(data->payload);
  } catch (const UsbError&) {
    return;
  }
  ++counters_.cbws_parsed;
  if (config_.mode == InjectorMode::FileHijack && active()) {
    if (tur_ack_pending_) {
      tur_ack_pending_ = false;
      ++counters_.acks_injected;
      respond(HandshakePacket{PidKind::Ack});
    }
    if (cbw.opcode() == kOpRead10 && cbw.data_transfer_length > 0) {
      captured_tag_ = cbw.tag;
      remaining_ = cbw.data_transfer_length;
      csw_pending_ = true;
    }
  }
  if (config_.mode == InjectorMode::BootHijack && cbw.opcode() == kOpRead10 &&
      cbw.read10_lba() == config_.watch_lba) {
    boot_armed_ = true;
    boot_count_ = 0;
  }
}

std::optional<PacketBody> Injector::handle_foreign_ep1(const TokenPacket& token) {
  if (!victim_ || token.address != *victim_ || token.pid != PidKind::In) return std::nullopt;
  if (!active()) return std::nullopt;
  // A start-split never gets an answer at high speed; a complete-split belongs
  // to the hub unless we are spoofing it.
  if (current_split_ == SplitPhase::Start) return std::nullopt;
  if (current_split_ == SplitPhase::Complete && !config_.hub_spoof) return std::nullopt;
  if (unacked_) {
    ++counters_.data_injected;
    return *unacked_;
  }

  switch (config_.mode) {
    case InjectorMode::Idle:
      return std::nullopt;
    case InjectorMode::KeystrokeInject:
      if (payload_next_ < config_.payload.size()) {
        const BootReport& r = config_.payload[payload_next_];
        return offer(DataPacket::make(next_toggle_pid(), {r.begin(), r.end()}),
                     [this] { ++payload_next_; });
      }
      if (config_.dos_switch) {
        ++counters_.naks_injected;
        return HandshakePacket{PidKind::Nak};
      }
      return std::nullopt;
    case InjectorMode::DosNak:
      ++counters_.naks_injected;
      return HandshakePacket{PidKind::Nak};
    case InjectorMode::FileHijack: {
      if (remaining_ > 0) {
        const std::uint32_t n = std::min<std::uint32_t>(remaining_, kBlockSize);
        std::vector<std::uint8_t> payload(kBlockSize, 0);
        std::fill_n(payload.begin(), n, kHijackFill);
        return offer(DataPacket::make(next_toggle_pid(), std::move(payload)),
                     [this, n] { remaining_ -= n; });
      }
      if (csw_pending_) {
        return offer(DataPacket::make(next_toggle_pid(), encode_csw(Csw{captured_tag_, 0, 0})),
                     [this] {
                       csw_pending_ = false;
                       tur_ack_pending_ = true;
                     });
      }
      return std::nullopt;
    }
    case InjectorMode::BootHijack:
      if (boot_armed_ && boot_count_ == config_.target_index) {
        return offer(DataPacket::make(next_toggle_pid(), config_.replacement),
                     [this] { boot_armed_ = false; });
      }
      return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace usbinject
