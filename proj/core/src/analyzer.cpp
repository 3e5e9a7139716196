#include "usbinject/analyzer.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "usbinject/error.hpp"

namespace usbinject {

using ojson = nlohmann::ordered_json;

namespace {

constexpr std::string_view kTraceFormat = "usbinject-trace";
constexpr int kTraceVersion = 1;

bool in_collision(const Simulator& sim, TxId id) {
  for (TxId t = id; t != kNoTx; t = sim.tx(t).repeat_of) {
    if (sim.tx(t).collided) return true;
    for (const CollisionRecord& c : sim.collisions()) {
      if (c.first_tx == t || c.later_tx == t) return true;
    }
  }
  return false;
}

}  // namespace

Capture::Capture(Simulator& sim, std::string_view link_name)
    : sim_(sim), link_name_(link_name) {
  const LinkId link = sim.find_link(link_name);
  sim.add_tap(link, [this](const Transmission& tx) { seen_.push_back(tx.id); });
}

Trace Capture::trace() const {
  Trace out;
  out.link = link_name_;
  std::vector<TxId> ids = seen_;
  std::sort(ids.begin(), ids.end(), [this](TxId a, TxId b) {
    const SimTime ta = sim_.tx(a).start;
    const SimTime tb = sim_.tx(b).start;
    return ta != tb ? ta < tb : a < b;
  });
  for (TxId id : ids) {
    const Transmission& tx = sim_.tx(id);
    TraceEntry e;
    e.t = tx.start;
    e.tx = id;
    e.link = link_name_;
    e.dir = tx.dir;
    e.bytes = encode(tx.packet.body);
    e.pid = body_pid(tx.packet.body);
    if (const auto* tok = as<TokenPacket>(tx.packet.body)) {
      e.address = tok->address;
      e.endpoint = tok->endpoint;
    }
    e.garble = as<GarbleIndication>(tx.packet.body) != nullptr;
    e.collision = in_collision(sim_, id);
    out.entries.push_back(std::move(e));
  }
  return out;
}

std::optional<PidKind> parse_pid_name(std::string_view name) {
  for (PidKind k : kAllPidKinds) {
    if (pid_name(k) == name) return k;
  }
  return std::nullopt;
}

void export_trace(const Trace& trace, std::ostream& out) {
  ojson header;
  header["format"] = kTraceFormat;
  header["version"] = kTraceVersion;
  header["link"] = trace.link;
  out << header.dump() << '\n';
  for (const TraceEntry& e : trace.entries) {
    ojson j;
    j["t"] = e.t.count();
    j["tx"] = e.tx;
    j["link"] = e.link;
    j["dir"] = direction_name(e.dir);
    j["bytes"] = hex_dump(e.bytes);
    if (e.pid) j["pid"] = pid_name(*e.pid);
    if (e.address) j["addr"] = *e.address;
    if (e.endpoint) j["ep"] = *e.endpoint;
    j["collision"] = e.collision;
    j["garble"] = e.garble;
    out << j.dump() << '\n';
  }
}

Trace import_trace(std::istream& in) {
  Trace trace;
  std::string line;
  int lineno = 0;
  auto fail = [&lineno](const std::string& why) {
    throw UsbError(Errc::MalformedTraceLine, "line " + std::to_string(lineno) + ": " + why);
  };
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    ojson j;
    try {
      j = ojson::parse(line);
    } catch (const nlohmann::json::exception& ex) {
      fail(ex.what());
    }
    if (!j.is_object()) fail("not an object");
    try {
      if (!have_header) {
        if (j.value("format", "") != kTraceFormat) fail("missing trace header");
        if (j.at("version").get<int>() != kTraceVersion) fail("unsupported version");
        trace.link = j.at("link").get<std::string>();
        have_header = true;
        continue;
      }
      TraceEntry e;
      e.t = SimTime{j.at("t").get<std::int64_t>()};
      e.tx = j.at("tx").get<TxId>();
      e.link = j.at("link").get<std::string>();
      const std::string dir = j.at("dir").get<std::string>();
      if (dir == "up") {
        e.dir = Direction::Upstream;
      } else if (dir == "down") {
        e.dir = Direction::Downstream;
      } else {
        fail("bad dir '" + dir + "'");
      }
      auto bytes = parse_hex_dump(j.at("bytes").get<std::string>());
      if (!bytes) fail("bad bytes");
      e.bytes = std::move(*bytes);
      if (j.contains("pid")) {
        e.pid = parse_pid_name(j.at("pid").get<std::string>());
        if (!e.pid) fail("unknown pid");
      }
      if (j.contains("addr")) e.address = j.at("addr").get<std::uint8_t>();
      if (j.contains("ep")) e.endpoint = j.at("ep").get<std::uint8_t>();
      e.collision = j.at("collision").get<bool>();
      e.garble = j.at("garble").get<bool>();
      trace.entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      fail(ex.what());
    }
  }
  if (!have_header) {
    lineno = std::max(lineno, 1);
    fail("missing trace header");
  }
  return trace;
}

void export_trace_file(const Trace& trace, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw UsbError(Errc::Io, "cannot write " + path);
  export_trace(trace, f);
}

Trace import_trace_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw UsbError(Errc::Io, "cannot read " + path);
  return import_trace(f);
}

std::string_view verdict_name(Verdict verdict) {
  switch (verdict) {
    case Verdict::InjectionSucceeded: return "InjectionSucceeded";
    case Verdict::DosOnly: return "DosOnly";
    case Verdict::Safe: return "Safe";
  }
  return "?";
}

std::optional<Verdict> parse_verdict(std::string_view text) {
  if (text == "InjectionSucceeded") return Verdict::InjectionSucceeded;
  if (text == "DosOnly") return Verdict::DosOnly;
  if (text == "Safe") return Verdict::Safe;
  return std::nullopt;
}

InjectionReport verify(const VerifyInput& in) {
  InjectionReport r;
  r.victim_address = in.victim_address;
  r.victim_data_sent = in.victim_data_sent;
  for (std::size_t i = 0; i < in.records.size(); ++i) {
    const TransactionRecord& rec = in.records[i];
    if (rec.attributed_address != in.victim_address) continue;
    ++r.total_attributed;
    if (rec.outcome == Outcome::Garble) ++r.garbles;
    if (rec.outcome == Outcome::Timeout) ++r.timeouts;
    if (!rec.response || i >= in.provenance.size()) continue;
    const bool answer = as<DataPacket>(*rec.response) || as<HandshakePacket>(*rec.response);
    if (!answer) continue;
    const std::optional<Provenance>& origin = in.provenance[i].origin;
    if (!origin) continue;
    if (origin->node == in.victim_node) {
      if (rec.delivered) ++r.victim_delivered;
      continue;
    }
    if (in.hubs.count(origin->node)) continue;
    ++r.forged_attributed;
    if (as<DataPacket>(*rec.response)) ++r.forged_data;
    if (rec.delivered) ++r.forged_delivered;
  }
  if (r.victim_data_sent > 0) {
    r.delivery_rate =
        static_cast<double>(r.victim_delivered) / static_cast<double>(r.victim_data_sent);
  }
  if (r.forged_attributed > 0) {
    r.verdict = Verdict::InjectionSucceeded;
  } else if (r.victim_data_sent > 0 && r.victim_delivered == 0) {
    r.verdict = Verdict::DosOnly;
  } else {
    r.verdict = Verdict::Safe;
  }
  return r;
}

std::uint64_t origin_data_count(const Simulator& sim, NodeId node) {
  std::uint64_t n = 0;
  for (const Transmission& tx : sim.transmissions()) {
    if (tx.repeat_of != kNoTx || tx.packet.provenance.node != node) continue;
    // A translator re-sends buffered data under the original provenance; only
    // count what left the node's own port.
    if (tx.dir != Direction::Upstream || sim.link(tx.link).downstream != node) continue;
    if (as<DataPacket>(tx.packet.body)) ++n;
  }
  return n;
}

std::string render_report_table(const InjectionReport& r) {
  std::ostringstream os;
  auto row = [&os](std::string_view key, const std::string& value) {
    os << std::left << std::setw(20) << key << value << '\n';
  };
  std::ostringstream rate;
  rate << std::fixed << std::setprecision(4) << r.delivery_rate;
  row("verdict", std::string(verdict_name(r.verdict)));
  row("victim_address", std::to_string(r.victim_address));
  row("total_attributed", std::to_string(r.total_attributed));
  row("forged_attributed", std::to_string(r.forged_attributed));
  row("forged_data", std::to_string(r.forged_data));
  row("forged_delivered", std::to_string(r.forged_delivered));
  row("victim_delivered", std::to_string(r.victim_delivered));
  row("victim_data_sent", std::to_string(r.victim_data_sent));
  row("delivery_rate", rate.str());
  row("garbles", std::to_string(r.garbles));
  row("timeouts", std::to_string(r.timeouts));
  return os.str();
}

TraceSummary summarize_trace(const Trace& trace) {
  TraceSummary s;
  s.link = trace.link;
  for (const TraceEntry& e : trace.entries) {
    ++s.entries;
    if (e.dir == Direction::Upstream) {
      ++s.upstream;
    } else {
      ++s.downstream;
    }
    if (e.collision) ++s.collisions;
    if (e.garble) ++s.garbles;
    ++s.by_pid[e.pid ? std::string(pid_name(*e.pid)) : std::string("GARBLE")];
    if (e.address && e.pid && is_token_pid(*e.pid)) ++s.tokens_by_address[*e.address];
    try {
      if (body_pid(decode(e.bytes)) != e.pid) ++s.undecodable;
    } catch (const UsbError&) {
      ++s.undecodable;
    }
  }
  return s;
}

std::string render_trace_summary_text(const TraceSummary& s) {
  std::ostringstream os;
  os << "link " << s.link << '\n';
  os << "entries " << s.entries << " (up " << s.upstream << ", down " << s.downstream << ")\n";
  os << "collisions " << s.collisions << ", garbles " << s.garbles << ", undecodable "
     << s.undecodable << '\n';
  for (const auto& [pid, n] : s.by_pid) {
    os << "  " << std::left << std::setw(8) << pid << n << '\n';
  }
  for (const auto& [addr, n] : s.tokens_by_address) {
    os << "  tokens to addr " << addr << ": " << n << '\n';
  }
  return os.str();
}

std::string render_trace_summary_json(const TraceSummary& s) {
  ojson j;
  j["link"] = s.link;
  j["entries"] = s.entries;
  j["upstream"] = s.upstream;
  j["downstream"] = s.downstream;
  j["collisions"] = s.collisions;
  j["garbles"] = s.garbles;
  j["undecodable"] = s.undecodable;
  ojson pids = ojson::object();
  for (const auto& [pid, n] : s.by_pid) pids[pid] = n;
  j["by_pid"] = pids;
  ojson addrs = ojson::object();
  for (const auto& [addr, n] : s.tokens_by_address) addrs[std::to_string(addr)] = n;
  j["tokens_by_address"] = addrs;
  return j.dump(2) + "\n";
}

}  // namespace usbinject
