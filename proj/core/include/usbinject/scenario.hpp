#pragma once

// Declarative runs. A scenario is a JSON document describing a topology below
// one host, an optional attack, optional mass-storage reads and policy, and
// what the run is expected to show.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "usbinject/analyzer.hpp"
#include "usbinject/device.hpp"
#include "usbinject/host.hpp"
#include "usbinject/hub.hpp"
#include "usbinject/policy.hpp"

namespace usbinject {

inline constexpr int kMaxHubChain = 5;
inline constexpr int kMaxDevices = 127;

struct HubSpec {
  int ports = 4;
  TtMode tt_mode = TtMode::SingleTT;
  CollisionPolicy collision = CollisionPolicy::FirstWins;
  Speed speed = Speed::High;
  std::optional<SimTime> repeater_delay;  // default by speed
  SimTime tt_response_latency = kDefaultTtResponseLatency;
  std::map<int, SimTime> latency_bias;
  bool embedded = false;
};

enum class DeviceKind : std::uint8_t { Keyboard, Mouse, MassStorage, Injector };
std::string_view device_kind_name(DeviceKind kind);

struct DeviceSpec {
  DeviceKind kind = DeviceKind::Keyboard;
  std::string model;  // keyboard: dell|corsair; injector persona: mouse|serial
  std::optional<Speed> speed;
  std::optional<SimTime> latency;
  std::string typed_text;
  std::uint32_t image_blocks = 256;
  bool answers_enumeration = true;
};

struct NodeSpec {
  std::string id;
  bool is_hub = false;
  std::string parent;  // "host" or another node id
  int port = 1;
  HubSpec hub;
  DeviceSpec device;
};

struct AttackSpec {
  InjectorMode mode = InjectorMode::Idle;
  std::string injector;
  std::string victim;  // empty when victim_address pins the target instead
  std::optional<std::uint8_t> victim_address;
  std::string payload_text;
  bool dos_switch = false;
  bool hub_spoof = false;
  std::uint32_t watch_lba = 0;
  int target_index = kBootTargetIndex;
  std::uint8_t replacement_fill = 0xCC;
  SimTime active_from{0};
  std::optional<SimTime> active_until;
};

struct MsdRead {
  std::string device;  // empty: the first mass-storage node
  SimTime at{0};
  std::uint32_t lba = 0;
  std::uint32_t length = 0;
};

struct PolicySpec {
  std::optional<PolicyPreset> preset;
  std::string trusted;    // node ids, presets only
  std::string untrusted;
  PolicyAction untrusted_action = PolicyAction::Block;
  Policy rules;
};

enum class BufferExpectation : std::uint8_t { Hijack, Image };

struct Expectation {
  std::optional<Verdict> verdict;
  std::optional<std::string> keystrokes;
  std::optional<std::string> keystrokes_contains;
  std::optional<double> delivery_rate_min;  // inclusive bounds
  std::optional<double> delivery_rate_max;
  std::optional<BufferExpectation> host_buffer;
};

struct ScenarioConfig {
  std::string name = "scenario";
  std::uint64_t seed = 1;
  SimTime duration{100'000'000};
  HostConfig host;
  std::vector<NodeSpec> topology;
  std::optional<AttackSpec> attack;
  std::vector<MsdRead> reads;
  std::optional<PolicySpec> policy;
  std::optional<std::string> tap;  // link name; "" disables; absent picks the victim's root link
  Expectation expect;
  std::string trace_out = "trace.jsonl";
  std::string report_out = "report.json";
};

/// Throws UsbError(SchemaViolation) naming the field, or
/// UsbError(TopologyInvariantViolation).
ScenarioConfig parse_scenario(std::string_view json_text);
ScenarioConfig load_scenario(const std::string& path);
/// Structural checks that do not need a simulation.
void validate_scenario(const ScenarioConfig& config);

/// Deterministic backing store content for a mass-storage node.
std::vector<std::uint8_t> make_disk_image(std::uint32_t blocks);
/// What the host ends up holding after a hijacked READ(10) of length bytes.
std::vector<std::uint8_t> hijack_buffer(std::uint32_t length);

struct MsdSummary {
  std::uint32_t tag = 0;
  std::uint32_t requested = 0;
  std::vector<std::uint8_t> data;
  std::optional<Csw> csw;
  bool complete = false;
};

struct RunResult {
  std::string name;
  std::uint64_t seed = 0;
  InjectionReport report;
  std::optional<Trace> trace;
  std::string keystrokes;
  std::uint64_t mouse_reports = 0;
  std::vector<MsdSummary> transfers;
  std::vector<TransactionRecord> records;
  std::vector<ProvenanceEntry> provenance;
  std::vector<PolicyDecision> policy_log;
  std::vector<EnumerationState> enumeration;
  std::vector<std::string> node_names;  // by NodeId
  std::uint8_t victim_address = 0;
  std::uint64_t strays = 0;
  std::uint64_t collisions = 0;
  InjectorCounters injector;
  // victim-side state at the end of the run
  std::uint64_t victim_committed = 0;
  std::optional<bool> victim_ep1_toggle;
  std::optional<bool> host_ep1_toggle;
  std::vector<std::uint8_t> victim_image;
  std::vector<std::string> failures;
  bool expectation_met = true;
};

RunResult run_scenario(const ScenarioConfig& config);

std::string render_run_json(const RunResult& result);
std::string render_run_text(const RunResult& result);
/// Writes the trace (if captured) and the report under out_dir.
void write_run_outputs(const ScenarioConfig& config, const RunResult& result,
                       const std::string& out_dir);

// --- matrix sweeps ---------------------------------------------------------

enum class TierLaw : std::uint8_t { HighSpeed, ClassicUnderHighSpeed, HubSpoof, ClassicCommon };
inline constexpr TierLaw kAllTierLaws[] = {TierLaw::HighSpeed, TierLaw::ClassicUnderHighSpeed,
                                           TierLaw::HubSpoof, TierLaw::ClassicCommon};
std::string_view tier_law_name(TierLaw law);
std::optional<TierLaw> parse_tier_law(std::string_view text);
/// What the topology laws predict for an injector at tier ti and victim at tv.
bool tier_law_predicts_injection(TierLaw law, int ti, int tv);
/// Common hub at tier 1, chains of intermediate hubs below its ports 1 and 2.
ScenarioConfig tier_scenario(TierLaw law, int ti, int tv, std::uint64_t seed);

struct TtCellExpectation {
  bool injection = false;
  bool dos = false;
};
TtCellExpectation tt_cell_expectation(TtMode mode, CollisionPolicy policy, Speed speed);
/// One hub-under-test cell; dos selects the NAK-flood run instead of injection.
ScenarioConfig tt_cell_scenario(TtMode mode, CollisionPolicy policy, Speed speed, bool dos,
                                std::uint64_t seed);
/// Victim and injector each on their own root port.
ScenarioConfig root_isolation_scenario(InjectorMode mode, std::uint64_t seed);

enum class MatrixKind : std::uint8_t { TtMatrix, TierSweep };

struct MatrixSpec {
  std::string name = "matrix";
  MatrixKind kind = MatrixKind::TtMatrix;
  std::uint64_t seed = 1;
  std::vector<TierLaw> laws{std::begin(kAllTierLaws), std::end(kAllTierLaws)};
  int tier_min = 2;
  int tier_max = 7;
  std::optional<SimTime> duration;  // overrides each cell's default
};

MatrixSpec parse_matrix_spec(std::string_view json_text);
MatrixSpec load_matrix_spec(const std::string& path);

struct MatrixCell {
  std::string row;
  std::string column;
  Verdict inject_verdict = Verdict::Safe;
  bool injection = false;
  bool dos = false;
  bool expected_injection = false;
  bool expected_dos = false;
  bool dos_checked = false;
  bool matches = true;
};

struct MatrixResult {
  std::string name;
  MatrixKind kind = MatrixKind::TtMatrix;
  std::vector<MatrixCell> cells;
  bool all_match = true;
};

/// jobs > 1 spreads cells over worker threads; cell order is fixed either way.
MatrixResult run_matrix(const MatrixSpec& spec, int jobs = 1);
std::string render_matrix_text(const MatrixResult& result);
std::string render_matrix_json(const MatrixResult& result);

}  // namespace usbinject
