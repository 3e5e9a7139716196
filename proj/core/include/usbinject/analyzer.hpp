#pragma once

// Passive link capture, trace files, and ground-truth checking of what the host
// attributed against who actually transmitted.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "usbinject/packet.hpp"
#include "usbinject/record.hpp"
#include "usbinject/sim.hpp"

namespace usbinject {

struct TraceEntry {
  SimTime t{0};  // transmission start at the sender
  TxId tx = kNoTx;
  std::string link;
  Direction dir = Direction::Downstream;
  std::vector<std::uint8_t> bytes;
  std::optional<PidKind> pid;  // empty for a garble indication
  std::optional<std::uint8_t> address;
  std::optional<std::uint8_t> endpoint;
  bool collision = false;
  bool garble = false;

  bool operator==(const TraceEntry&) const = default;
};

struct Trace {
  std::string link;
  std::vector<TraceEntry> entries;

  bool operator==(const Trace&) const = default;
};

/// Records every packet that crosses one link, in both directions. Installing a
/// capture never changes simulation timing.
class Capture {
 public:
  /// Throws UsbError(UnknownLink).
  Capture(Simulator& sim, std::string_view link_name);

  /// Entries ordered by (t, tx), with collision flags refreshed from the
  /// simulator's collision log.
  Trace trace() const;

 private:
  Simulator& sim_;
  std::string link_name_;
  std::vector<TxId> seen_;
};

std::optional<PidKind> parse_pid_name(std::string_view name);

// Trace file: a header object line, then one object per entry with the fields
//   t, tx, link, dir, bytes, pid, addr, ep, collision, garble
// in that order. pid/addr/ep are omitted when they do not apply.
void export_trace(const Trace& trace, std::ostream& out);
/// Throws UsbError(MalformedTraceLine) naming the 1-based line.
Trace import_trace(std::istream& in);
void export_trace_file(const Trace& trace, const std::string& path);
Trace import_trace_file(const std::string& path);

enum class Verdict : std::uint8_t { InjectionSucceeded, DosOnly, Safe };
std::string_view verdict_name(Verdict verdict);
std::optional<Verdict> parse_verdict(std::string_view text);

struct VerifyInput {
  std::span<const TransactionRecord> records;
  std::span<const ProvenanceEntry> provenance;
  std::uint8_t victim_address = 0;
  NodeId victim_node = kNoNode;
  std::set<NodeId> hubs;  // split answers from a hub are the hub's own, not forged
  std::uint64_t victim_data_sent = 0;
};

struct InjectionReport {
  std::uint8_t victim_address = 0;
  std::uint64_t total_attributed = 0;
  std::uint64_t forged_attributed = 0;
  std::uint64_t forged_data = 0;
  std::uint64_t forged_delivered = 0;
  std::uint64_t victim_delivered = 0;
  std::uint64_t victim_data_sent = 0;
  std::uint64_t garbles = 0;
  std::uint64_t timeouts = 0;
  double delivery_rate = 0.0;
  Verdict verdict = Verdict::Safe;
};

InjectionReport verify(const VerifyInput& input);

/// DATA packets the node originated (repeats excluded).
std::uint64_t origin_data_count(const Simulator& sim, NodeId node);

std::string render_report_table(const InjectionReport& report);

/// Offline view of a trace file: no provenance, only what crossed the wire.
struct TraceSummary {
  std::string link;
  std::uint64_t entries = 0;
  std::uint64_t upstream = 0;
  std::uint64_t downstream = 0;
  std::uint64_t collisions = 0;
  std::uint64_t garbles = 0;
  std::uint64_t undecodable = 0;  // bytes that do not decode to their recorded pid
  std::map<std::string, std::uint64_t> by_pid;
  std::map<int, std::uint64_t> tokens_by_address;
};

TraceSummary summarize_trace(const Trace& trace);
std::string render_trace_summary_text(const TraceSummary& summary);
std::string render_trace_summary_json(const TraceSummary& summary);

}  // namespace usbinject
