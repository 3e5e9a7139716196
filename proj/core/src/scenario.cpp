#include "usbinject/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "usbinject/error.hpp"
#include "usbinject/keymap.hpp"

namespace usbinject {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

// --- schema helpers ----------------------------------------------------------

[[noreturn]] void schema(const std::string& path, const std::string& why) {
  throw UsbError(Errc::SchemaViolation, path + ": " + why);
}

std::string field(const std::string& path, std::string_view key) {
  return path.empty() ? std::string(key) : path + "." + std::string(key);
}

template <class T>
std::optional<T> opt(const json& j, std::string_view key, const std::string& path) {
  auto it = j.find(std::string(key));
  if (it == j.end() || it->is_null()) return std::nullopt;
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) schema(field(path, key), "expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) schema(field(path, key), "expected an integer");
      const auto v = it->get<std::int64_t>();
      if (v < static_cast<std::int64_t>(std::numeric_limits<T>::min()) ||
          (v > 0 && static_cast<std::uint64_t>(v) > std::numeric_limits<T>::max())) {
        schema(field(path, key), "out of range");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) schema(field(path, key), "expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) schema(field(path, key), "expected a string");
    }
    return it->get<T>();
  } catch (const json::exception& ex) {
    schema(field(path, key), ex.what());
  }
}

template <class T>
T req(const json& j, std::string_view key, const std::string& path) {
  auto v = opt<T>(j, key, path);
  if (!v) schema(field(path, key), "missing");
  return *v;
}

std::optional<SimTime> opt_ms(const json& j, std::string_view key, const std::string& path) {
  auto v = opt<std::int64_t>(j, key, path);
  if (!v) return std::nullopt;
  if (*v < 0) schema(field(path, key), "must be >= 0");
  return SimTime{*v * 1'000'000};
}

std::optional<SimTime> opt_ns(const json& j, std::string_view key, const std::string& path) {
  auto v = opt<std::int64_t>(j, key, path);
  if (!v) return std::nullopt;
  if (*v < 0) schema(field(path, key), "must be >= 0");
  return SimTime{*v};
}

template <class E, class Parse>
std::optional<E> opt_enum(const json& j, std::string_view key, const std::string& path,
                          Parse parse) {
  auto s = opt<std::string>(j, key, path);
  if (!s) return std::nullopt;
  auto v = parse(*s);
  if (!v) schema(field(path, key), "unknown value '" + *s + "'");
  return v;
}

template <class E, class Parse>
E req_enum(const json& j, std::string_view key, const std::string& path, Parse parse) {
  auto v = opt_enum<E>(j, key, path, parse);
  if (!v) schema(field(path, key), "missing");
  return *v;
}

const json& object_at(const json& j, std::string_view key, const std::string& path) {
  const json& v = j.at(std::string(key));
  if (!v.is_object()) schema(field(path, key), "expected an object");
  return v;
}

std::optional<DeviceKind> parse_device_kind(std::string_view s) {
  if (s == "keyboard") return DeviceKind::Keyboard;
  if (s == "mouse") return DeviceKind::Mouse;
  if (s == "msd") return DeviceKind::MassStorage;
  if (s == "injector") return DeviceKind::Injector;
  return std::nullopt;
}

std::optional<BufferExpectation> parse_buffer_expectation(std::string_view s) {
  if (s == "hijack") return BufferExpectation::Hijack;
  if (s == "image") return BufferExpectation::Image;
  return std::nullopt;
}

HubSpec parse_hub(const json& j, const std::string& path) {
  HubSpec h;
  if (auto v = opt<int>(j, "ports", path)) h.ports = *v;
  if (h.ports < 1 || h.ports > 15) schema(field(path, "ports"), "must be 1..15");
  if (auto v = opt_enum<TtMode>(j, "tt", path, parse_tt_mode)) h.tt_mode = *v;
  if (auto v = opt_enum<CollisionPolicy>(j, "collision", path, parse_collision_policy)) {
    h.collision = *v;
  }
  if (auto v = opt_enum<Speed>(j, "speed", path, parse_speed)) h.speed = *v;
  if (h.speed == Speed::Low) schema(field(path, "speed"), "hubs run at FS or HS");
  h.repeater_delay = opt_ns(j, "repeater_delay_ns", path);
  if (auto v = opt_ns(j, "tt_latency_ns", path)) h.tt_response_latency = *v;
  if (auto v = opt<bool>(j, "embedded", path)) h.embedded = *v;
  if (j.contains("latency_bias_ns")) {
    const json& b = object_at(j, "latency_bias_ns", path);
    const std::string bpath = field(path, "latency_bias_ns");
    for (const auto& [key, value] : b.items()) {
      int port = 0;
      try {
        port = std::stoi(key);
      } catch (const std::exception&) {
        schema(field(bpath, key), "port keys must be integers");
      }
      if (port < 1 || port > h.ports) schema(field(bpath, key), "no such port");
      if (!value.is_number_integer() || value.get<std::int64_t>() < 0) {
        schema(field(bpath, key), "expected a non-negative integer");
      }
      h.latency_bias[port] = SimTime{value.get<std::int64_t>()};
    }
  }
  return h;
}

DeviceSpec parse_device(const json& j, const std::string& path) {
  DeviceSpec d;
  d.kind = req_enum<DeviceKind>(j, "class", path, parse_device_kind);
  if (auto v = opt<std::string>(j, "model", path)) d.model = *v;
  d.speed = opt_enum<Speed>(j, "speed", path, parse_speed);
  d.latency = opt_ns(j, "latency_ns", path);
  if (auto v = opt<std::string>(j, "typed_text", path)) d.typed_text = *v;
  if (auto v = opt<std::uint32_t>(j, "image_blocks", path)) d.image_blocks = *v;
  if (auto v = opt<bool>(j, "answers_enumeration", path)) d.answers_enumeration = *v;
  switch (d.kind) {
    case DeviceKind::Keyboard:
      if (d.model.empty()) d.model = "dell";
      if (d.model != "dell" && d.model != "corsair") {
        schema(field(path, "model"), "keyboard model is dell or corsair");
      }
      break;
    case DeviceKind::Injector:
      if (d.model.empty()) d.model = "mouse";
      if (d.model != "mouse" && d.model != "serial") {
        schema(field(path, "model"), "injector persona is mouse or serial");
      }
      break;
    default:
      break;
  }
  if (!d.typed_text.empty()) {
    if (d.kind != DeviceKind::Keyboard) schema(field(path, "typed_text"), "keyboards only");
    (void)reports_for_text(d.typed_text);  // reject unmapped characters now
  }
  return d;
}

Policy parse_rules(const json& j, const std::string& path) {
  Policy p;
  if (auto v = opt_enum<PolicyAction>(j, "default", path, parse_policy_action)) {
    p.default_action = *v;
  }
  if (!j.contains("rules")) return p;
  const json& rules = j.at("rules");
  if (!rules.is_array()) schema(field(path, "rules"), "expected an array");
  for (std::size_t i = 0; i < rules.size(); ++i) {
    const std::string rpath = field(path, "rules") + "[" + std::to_string(i) + "]";
    const json& r = rules[i];
    if (!r.is_object()) schema(rpath, "expected an object");
    PolicyRule rule;
    rule.action = req_enum<PolicyAction>(r, "action", rpath, parse_policy_action);
    rule.match.vendor_id = opt<std::uint16_t>(r, "vendor_id", rpath);
    rule.match.product_id = opt<std::uint16_t>(r, "product_id", rpath);
    rule.match.device_class = opt_enum<DeviceClass>(r, "class", rpath, parse_device_class);
    rule.match.endpoint = opt<std::uint8_t>(r, "endpoint", rpath);
    rule.match.attachment = opt<std::string>(r, "attachment", rpath);
    p.rules.push_back(std::move(rule));
  }
  return p;
}

ScenarioConfig parse_scenario_json(const json& root) {
  if (!root.is_object()) schema("<root>", "expected an object");
  ScenarioConfig c;
  if (auto v = opt<std::string>(root, "name", "")) c.name = *v;
  if (auto v = opt<std::uint64_t>(root, "seed", "")) c.seed = *v;
  if (auto v = opt_ms(root, "duration_ms", "")) c.duration = *v;
  if (c.duration <= SimTime{0}) schema("duration_ms", "must be > 0");

  if (root.contains("host")) {
    const json& h = object_at(root, "host", "");
    if (auto v = opt<int>(h, "root_ports", "host")) c.host.root_ports = *v;
    if (c.host.root_ports < 1 || c.host.root_ports > 15) schema("host.root_ports", "must be 1..15");
    c.host.response_timeout = opt_ns(h, "timeout_ns", "host");
    c.host.guard_gap = opt_ns(h, "guard_ns", "host");
    if (auto v = opt<bool>(h, "sof", "host")) c.host.sof = *v;
  }

  if (!root.contains("topology")) schema("topology", "missing");
  const json& topo = root.at("topology");
  if (!topo.is_array()) schema("topology", "expected an array");
  for (std::size_t i = 0; i < topo.size(); ++i) {
    const std::string path = "topology[" + std::to_string(i) + "]";
    const json& n = topo[i];
    if (!n.is_object()) schema(path, "expected an object");
    NodeSpec spec;
    spec.id = req<std::string>(n, "id", path);
    const std::string kind = req<std::string>(n, "kind", path);
    if (kind == "hub") {
      spec.is_hub = true;
      spec.hub = parse_hub(n, path);
    } else if (kind == "device") {
      spec.device = parse_device(n, path);
    } else {
      schema(field(path, "kind"), "expected hub or device");
    }
    spec.parent = req<std::string>(n, "parent", path);
    spec.port = req<int>(n, "port", path);
    c.topology.push_back(std::move(spec));
  }

  if (root.contains("attack")) {
    const json& a = object_at(root, "attack", "");
    AttackSpec at;
    at.mode = req_enum<InjectorMode>(a, "mode", "attack", parse_injector_mode);
    if (at.mode == InjectorMode::Idle) {
      if (auto v = opt<std::string>(a, "injector", "attack")) at.injector = *v;
    } else {
      at.injector = req<std::string>(a, "injector", "attack");
    }
    if (auto v = opt<std::string>(a, "victim", "attack")) at.victim = *v;
    at.victim_address = opt<std::uint8_t>(a, "victim_address", "attack");
    if (at.mode != InjectorMode::Idle && at.victim.empty() && !at.victim_address) {
      schema("attack.victim", "missing");
    }
    if (auto v = opt<std::string>(a, "payload_text", "attack")) at.payload_text = *v;
    (void)reports_for_text(at.payload_text);
    if (auto v = opt<bool>(a, "dos_switch", "attack")) at.dos_switch = *v;
    if (auto v = opt<bool>(a, "hub_spoof", "attack")) at.hub_spoof = *v;
    if (auto v = opt<std::uint32_t>(a, "watch_lba", "attack")) at.watch_lba = *v;
    if (auto v = opt<int>(a, "target_index", "attack")) at.target_index = *v;
    if (auto v = opt<std::uint8_t>(a, "replacement_fill", "attack")) at.replacement_fill = *v;
    if (auto v = opt_ms(a, "active_from_ms", "attack")) at.active_from = *v;
    at.active_until = opt_ms(a, "active_until_ms", "attack");
    c.attack = std::move(at);
  }

  if (root.contains("msd")) {
    const json& m = object_at(root, "msd", "");
    if (auto v = opt_ms(m, "tur_interval_ms", "msd")) c.host.tur_interval = *v;
    if (m.contains("reads")) {
      const json& reads = m.at("reads");
      if (!reads.is_array()) schema("msd.reads", "expected an array");
      for (std::size_t i = 0; i < reads.size(); ++i) {
        const std::string path = "msd.reads[" + std::to_string(i) + "]";
        if (!reads[i].is_object()) schema(path, "expected an object");
        MsdRead r;
        if (auto v = opt<std::string>(reads[i], "device", path)) r.device = *v;
        auto at = opt_ms(reads[i], "at_ms", path);
        if (!at) schema(field(path, "at_ms"), "missing");
        r.at = *at;
        r.lba = req<std::uint32_t>(reads[i], "lba", path);
        r.length = req<std::uint32_t>(reads[i], "length", path);
        if (r.length == 0) schema(field(path, "length"), "must be > 0");
        c.reads.push_back(r);
      }
    }
  }

  if (root.contains("policy")) {
    const json& p = object_at(root, "policy", "");
    PolicySpec ps;
    ps.preset = opt_enum<PolicyPreset>(p, "preset", "policy", parse_policy_preset);
    if (ps.preset) {
      ps.trusted = req<std::string>(p, "trusted", "policy");
      ps.untrusted = req<std::string>(p, "untrusted", "policy");
      if (auto v = opt_enum<PolicyAction>(p, "untrusted_action", "policy", parse_policy_action)) {
        ps.untrusted_action = *v;
      }
      if (ps.untrusted_action == PolicyAction::Allow) {
        schema("policy.untrusted_action", "must be Block or Reject");
      }
    } else {
      ps.rules = parse_rules(p, "policy");
    }
    c.policy = std::move(ps);
  }

  c.tap = opt<std::string>(root, "tap", "");

  if (root.contains("expect")) {
    const json& e = object_at(root, "expect", "");
    c.expect.verdict = opt_enum<Verdict>(e, "verdict", "expect", parse_verdict);
    c.expect.keystrokes = opt<std::string>(e, "keystrokes", "expect");
    c.expect.keystrokes_contains = opt<std::string>(e, "keystrokes_contains", "expect");
    c.expect.delivery_rate_min = opt<double>(e, "delivery_rate_min", "expect");
    c.expect.delivery_rate_max = opt<double>(e, "delivery_rate_max", "expect");
    c.expect.host_buffer =
        opt_enum<BufferExpectation>(e, "host_buffer", "expect", parse_buffer_expectation);
  }

  if (root.contains("outputs")) {
    const json& o = object_at(root, "outputs", "");
    if (auto v = opt<std::string>(o, "trace", "outputs")) c.trace_out = *v;
    if (auto v = opt<std::string>(o, "report", "outputs")) c.report_out = *v;
  }

  validate_scenario(c);
  return c;
}

// --- building ----------------------------------------------------------------

Speed min_speed(Speed a, Speed b) { return static_cast<int>(a) < static_cast<int>(b) ? a : b; }

Speed default_device_speed(const DeviceSpec& d) {
  if (d.speed) return *d.speed;
  switch (d.kind) {
    case DeviceKind::Keyboard: return d.model == "corsair" ? Speed::Full : Speed::Low;
    case DeviceKind::Mouse: return Speed::Full;
    case DeviceKind::MassStorage: return Speed::High;
    case DeviceKind::Injector: return d.model == "serial" ? Speed::High : Speed::Full;
  }
  return Speed::Full;
}

DeviceDescriptor descriptor_for(const DeviceSpec& d) {
  DeviceDescriptor desc;
  switch (d.kind) {
    case DeviceKind::Keyboard:
      desc = d.model == "corsair" ? descriptors::corsair_keyboard() : descriptors::dell_keyboard();
      break;
    case DeviceKind::Mouse: desc = descriptors::generic_mouse(default_device_speed(d)); break;
    case DeviceKind::MassStorage: desc = descriptors::sandisk_flash(); break;
    case DeviceKind::Injector:
      desc = d.model == "serial" ? descriptors::serial_comm()
                                 : descriptors::generic_mouse(default_device_speed(d));
      break;
  }
  desc.speed = default_device_speed(d);
  return desc;
}

const NodeSpec* find_spec(const ScenarioConfig& c, std::string_view id) {
  for (const NodeSpec& n : c.topology) {
    if (n.id == id) return &n;
  }
  return nullptr;
}

// Parent-first order; throws on dangling parents and cycles.
std::vector<const NodeSpec*> build_order(const ScenarioConfig& c) {
  std::vector<const NodeSpec*> order;
  std::set<std::string> placed{"host"};
  std::vector<const NodeSpec*> left;
  for (const NodeSpec& n : c.topology) left.push_back(&n);
  while (!left.empty()) {
    bool progress = false;
    for (auto it = left.begin(); it != left.end();) {
      if (placed.count((*it)->parent)) {
        placed.insert((*it)->id);
        order.push_back(*it);
        it = left.erase(it);
        progress = true;
      } else {
        ++it;
      }
    }
    if (!progress) {
      throw UsbError(Errc::TopologyInvariantViolation,
                     "node '" + left.front()->id + "' is not connected to the host");
    }
  }
  return order;
}

std::uint64_t fnv1a(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

}  // namespace

std::string_view device_kind_name(DeviceKind kind) {
  switch (kind) {
    case DeviceKind::Keyboard: return "keyboard";
    case DeviceKind::Mouse: return "mouse";
    case DeviceKind::MassStorage: return "msd";
    case DeviceKind::Injector: return "injector";
  }
  return "?";
}

ScenarioConfig parse_scenario(std::string_view json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& ex) {
    throw UsbError(Errc::SchemaViolation, std::string("not valid JSON: ") + ex.what());
  }
  return parse_scenario_json(root);
}

ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw UsbError(Errc::Io, "cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_scenario(ss.str());
}

void validate_scenario(const ScenarioConfig& c) {
  std::set<std::string> ids;
  std::set<std::pair<std::string, int>> ports;
  for (const NodeSpec& n : c.topology) {
    if (n.id.empty() || n.id == "host") schema("topology", "bad node id '" + n.id + "'");
    if (!ids.insert(n.id).second) schema("topology", "duplicate node id '" + n.id + "'");
  }
  if (static_cast<int>(c.topology.size()) > kMaxDevices) {
    throw UsbError(Errc::TopologyInvariantViolation,
                   std::to_string(c.topology.size()) + " nodes exceed " +
                       std::to_string(kMaxDevices) + " addresses");
  }
  for (const NodeSpec& n : c.topology) {
    int limit = c.host.root_ports;
    if (n.parent != "host") {
      const NodeSpec* p = find_spec(c, n.parent);
      if (p == nullptr) schema("topology." + n.id + ".parent", "unknown node '" + n.parent + "'");
      if (!p->is_hub) {
        throw UsbError(Errc::TopologyInvariantViolation, "parent '" + n.parent + "' is not a hub");
      }
      limit = p->hub.ports;
    }
    if (n.port < 1 || n.port > limit) {
      throw UsbError(Errc::TopologyInvariantViolation,
                     n.parent + " has no port " + std::to_string(n.port));
    }
    if (!ports.insert({n.parent, n.port}).second) {
      throw UsbError(Errc::TopologyInvariantViolation,
                     n.parent + " port " + std::to_string(n.port) + " used twice");
    }
  }
  for (const NodeSpec* n : build_order(c)) {
    if (!n->is_hub) continue;
    int chain = 0;
    for (const NodeSpec* p = n; p != nullptr; p = find_spec(c, p->parent)) {
      if (p->is_hub && !p->hub.embedded) ++chain;
    }
    if (chain > kMaxHubChain) {
      throw UsbError(Errc::TopologyInvariantViolation,
                     n->id + " sits below " + std::to_string(chain) + " chained hubs");
    }
  }
  if (c.attack) {
    const NodeSpec* inj = find_spec(c, c.attack->injector);
    if (c.attack->injector.empty() && c.attack->mode == InjectorMode::Idle) {
      // baseline run: the attack block only names the victim
    } else if (inj == nullptr || inj->is_hub || inj->device.kind != DeviceKind::Injector) {
      schema("attack.injector", "'" + c.attack->injector + "' is not an injector node");
    }
    if (!c.attack->victim.empty()) {
      const NodeSpec* v = find_spec(c, c.attack->victim);
      if (v == nullptr || v->is_hub) {
        schema("attack.victim", "'" + c.attack->victim + "' is not a device node");
      }
    }
  }
  for (std::size_t i = 0; i < c.reads.size(); ++i) {
    const MsdRead& r = c.reads[i];
    const std::string path = "msd.reads[" + std::to_string(i) + "].device";
    if (r.device.empty()) {
      const bool any = std::any_of(c.topology.begin(), c.topology.end(), [](const NodeSpec& n) {
        return !n.is_hub && n.device.kind == DeviceKind::MassStorage;
      });
      if (!any) schema(path, "no mass-storage node in topology");
    } else {
      const NodeSpec* d = find_spec(c, r.device);
      if (d == nullptr || d->is_hub || d->device.kind != DeviceKind::MassStorage) {
        schema(path, "'" + r.device + "' is not a mass-storage node");
      }
    }
  }
  if (c.policy && c.policy->preset) {
    for (const std::string* id : {&c.policy->trusted, &c.policy->untrusted}) {
      const NodeSpec* d = find_spec(c, *id);
      if (d == nullptr || d->is_hub) schema("policy", "'" + *id + "' is not a device node");
    }
  }
}

std::vector<std::uint8_t> make_disk_image(std::uint32_t blocks) {
  std::vector<std::uint8_t> image(static_cast<std::size_t>(blocks) * kBlockSize);
  for (std::size_t i = 0; i < image.size(); ++i) {
    const std::size_t block = i / kBlockSize;
    image[i] = static_cast<std::uint8_t>((i * 7 + block * 13 + 1) & 0xFF);
  }
  return image;
}

std::vector<std::uint8_t> hijack_buffer(std::uint32_t length) {
  const std::size_t packets = (length + kBlockSize - 1) / kBlockSize;
  std::vector<std::uint8_t> out(packets * kBlockSize, 0);
  std::fill_n(out.begin(), length, kHijackFill);
  return out;
}

RunResult run_scenario(const ScenarioConfig& c) {
  validate_scenario(c);
  RunResult result;
  result.name = c.name;
  result.seed = c.seed;

  Simulator sim(c.seed);
  Host& host = sim.add_node<Host>("host", c.host);
  std::map<std::string, NodeId> ids{{"host", host.id()}};
  std::map<std::string, Speed> eff{{"host", Speed::High}};
  std::map<std::string, Device*> devices;
  std::set<NodeId> hub_ids;
  Injector* injector = nullptr;

  for (const NodeSpec* n : build_order(c)) {
    const Speed parent_speed = eff.at(n->parent);
    NodeId id = kNoNode;
    Speed link_speed = Speed::High;
    if (n->is_hub) {
      HubConfig hc;
      hc.num_ports = n->hub.ports;
      hc.tt_mode = n->hub.tt_mode;
      hc.collision_policy = n->hub.collision;
      hc.operating_speed = n->hub.speed;
      link_speed = min_speed(n->hub.speed, parent_speed);
      hc.repeater_delay = n->hub.repeater_delay.value_or(
          link_speed == Speed::High ? kHighSpeedRepeaterDelay : kClassicRepeaterDelay);
      hc.tt_response_latency = n->hub.tt_response_latency;
      hc.latency_bias = n->hub.latency_bias;
      hc.embedded = n->hub.embedded;
      Hub& hub = sim.add_node<Hub>(n->id, hc);
      id = hub.id();
      hub_ids.insert(id);
      eff[n->id] = link_speed;
    } else {
      const DeviceSpec& d = n->device;
      const DeviceDescriptor desc = descriptor_for(d);
      link_speed = min_speed(desc.speed, parent_speed);
      Device* dev = nullptr;
      switch (d.kind) {
        case DeviceKind::Keyboard: {
          const SimTime lat = d.latency.value_or(d.model == "corsair" ? kGamingKeyboardLatency
                                                                       : kKeyboardLatency);
          auto& kb = sim.add_node<Keyboard>(n->id, desc, lat);
          if (!d.typed_text.empty()) kb.type(d.typed_text);
          dev = &kb;
          break;
        }
        case DeviceKind::Mouse:
          dev = &sim.add_node<Mouse>(n->id, desc, d.latency.value_or(kKeyboardLatency));
          break;
        case DeviceKind::MassStorage:
          dev = &sim.add_node<MassStorage>(n->id, make_disk_image(d.image_blocks), desc,
                                           d.latency.value_or(kMassStorageLatency));
          break;
        case DeviceKind::Injector: {
          InjectorConfig ic;
          if (c.attack && c.attack->injector == n->id) {
            const AttackSpec& a = *c.attack;
            ic.mode = a.mode;
            ic.dos_switch = a.dos_switch;
            ic.hub_spoof = a.hub_spoof;
            ic.payload = reports_for_text(a.payload_text);
            ic.watch_lba = a.watch_lba;
            ic.target_index = a.target_index;
            ic.replacement.assign(kBlockSize, a.replacement_fill);
            ic.active_from = a.active_from;
            ic.active_until = a.active_until;
          }
          auto& inj = sim.add_node<Injector>(n->id, desc, ic, d.latency.value_or(kInjectorLatency));
          if (c.attack && c.attack->injector == n->id) injector = &inj;
          dev = &inj;
          break;
        }
      }
      dev->set_answers_enumeration(d.answers_enumeration);
      devices[n->id] = dev;
      id = dev->id();
    }
    ids[n->id] = id;
    sim.connect(ids.at(n->parent), n->port, id, link_speed, kLinkPropagation);
  }

  const Device* victim = nullptr;
  if (c.attack && !c.attack->victim.empty()) victim = devices.at(c.attack->victim);
  if (injector != nullptr && c.attack->victim_address) {
    injector->set_victim_address(*c.attack->victim_address);
  }
  if (injector != nullptr && victim != nullptr) {
    const NodeId vid = victim->id();
    host.on_configured([injector, vid](const EnumerationState& st) {
      if (st.node == vid) injector->set_victim_address(st.address);
    });
  }

  if (c.policy) {
    if (c.policy->preset) {
      host.set_policy(make_preset(*c.policy->preset, devices.at(c.policy->trusted)->descriptor(),
                                  devices.at(c.policy->untrusted)->descriptor(),
                                  c.policy->untrusted_action));
    } else {
      host.set_policy(c.policy->rules);
    }
  }

  // Reads go to the named node, else to the first mass-storage node.
  auto msd_target = [&c, &devices](const MsdRead& r) -> const Device* {
    if (!r.device.empty()) return devices.at(r.device);
    for (const NodeSpec& n : c.topology) {
      if (!n.is_hub && n.device.kind == DeviceKind::MassStorage) return devices.at(n.id);
    }
    return nullptr;
  };
  const Device* msd_node = nullptr;
  for (const MsdRead& r : c.reads) {
    const Device* target = msd_target(r);
    if (msd_node == nullptr) msd_node = target;
    const NodeId tid = target->id();
    sim.call_at(r.at, host.id(), [&host, &result, tid, r] {
      const EnumerationState* st = host.state_of(tid);
      MsdDriver* drv = st != nullptr ? host.msd(st->address) : nullptr;
      if (drv == nullptr) {
        result.failures.push_back("msd read at " + std::to_string(r.at.count()) +
                                  " ns: device not configured");
        return;
      }
      drv->read10(r.lba, r.length);
    });
  }

  std::optional<std::string> tap = c.tap;
  if (!tap && victim != nullptr) {
    NodeId n = victim->id();
    while (true) {
      const Link& l = sim.link(sim.node(n).upstream_link());
      if (l.upstream == host.id()) {
        tap = l.name;
        break;
      }
      n = l.upstream;
    }
  }
  std::optional<Capture> capture;
  if (tap && !tap->empty()) capture.emplace(sim, *tap);

  host.start();
  sim.run_until(c.duration);

  // --- collect ---
  result.records = host.records();
  result.provenance = host.provenance();
  if (host.policy() != nullptr) result.policy_log = host.policy()->log();
  result.enumeration = host.enumeration();
  result.node_names.resize(sim.node_count());
  for (NodeId i = 0; i < sim.node_count(); ++i) result.node_names[i] = sim.node(i).name();
  result.keystrokes = host.all_keystrokes();
  result.mouse_reports = host.mouse_reports();
  result.strays = host.strays();
  result.collisions = sim.collisions().size();
  if (injector != nullptr) result.injector = injector->counters();
  if (capture) result.trace = capture->trace();

  VerifyInput vin;
  vin.records = result.records;
  vin.provenance = result.provenance;
  vin.hubs = hub_ids;
  if (victim != nullptr) {
    vin.victim_node = victim->id();
    if (const EnumerationState* st = host.state_of(victim->id())) vin.victim_address = st->address;
    vin.victim_data_sent = origin_data_count(sim, victim->id());
  } else if (c.attack && c.attack->victim_address) {
    vin.victim_address = *c.attack->victim_address;
  }
  result.victim_address = vin.victim_address;
  result.report = verify(vin);

  if (const auto* kb = dynamic_cast<const Keyboard*>(victim)) {
    result.victim_committed = kb->reports_committed();
  }
  const auto* victim_msd = dynamic_cast<const MassStorage*>(victim);
  if (victim_msd == nullptr) victim_msd = dynamic_cast<const MassStorage*>(msd_node);
  if (victim_msd != nullptr) {
    result.victim_committed = victim_msd->packets_committed();
    result.victim_ep1_toggle = victim_msd->ep1_toggle();
    result.victim_image = victim_msd->image();
    if (const EnumerationState* st = host.state_of(victim_msd->id())) {
      result.host_ep1_toggle = host.expected_toggle(st->address, 1, TransferDir::In);
      if (MsdDriver* drv = host.msd(st->address)) {
        for (const MsdTransfer& t : drv->transfers()) {
          if (t.cbw.opcode() != kOpRead10) continue;
          result.transfers.push_back(
              MsdSummary{t.cbw.tag, t.cbw.data_transfer_length, t.data, t.csw, t.complete});
        }
      }
    }
  }

  // --- expectations ---
  const Expectation& e = c.expect;
  auto fail = [&result](std::string msg) { result.failures.push_back(std::move(msg)); };
  if (e.verdict && *e.verdict != result.report.verdict) {
    fail("verdict: expected " + std::string(verdict_name(*e.verdict)) + ", got " +
         std::string(verdict_name(result.report.verdict)));
  }
  if (e.keystrokes && *e.keystrokes != result.keystrokes) {
    fail("keystrokes: expected \"" + *e.keystrokes + "\", got \"" + result.keystrokes + "\"");
  }
  if (e.keystrokes_contains && result.keystrokes.find(*e.keystrokes_contains) == std::string::npos) {
    fail("keystrokes: \"" + *e.keystrokes_contains + "\" not in \"" + result.keystrokes + "\"");
  }
  if (e.delivery_rate_min && result.report.delivery_rate < *e.delivery_rate_min) {
    fail("delivery_rate below minimum");
  }
  if (e.delivery_rate_max && result.report.delivery_rate > *e.delivery_rate_max) {
    fail("delivery_rate above maximum");
  }
  if (e.host_buffer) {
    if (result.transfers.empty() || c.reads.empty()) {
      fail("host_buffer: no completed READ(10)");
    } else {
      const MsdSummary& t = result.transfers.front();
      const MsdRead& r = c.reads.front();
      std::vector<std::uint8_t> want;
      if (*e.host_buffer == BufferExpectation::Hijack) {
        want = hijack_buffer(r.length);
      } else {
        want.assign(r.length, 0);
        const std::size_t off = static_cast<std::size_t>(r.lba) * kBlockSize;
        for (std::size_t i = 0; i < r.length && off + i < result.victim_image.size(); ++i) {
          want[i] = result.victim_image[off + i];
        }
      }
      if (t.data != want) fail("host_buffer: contents differ");
      if (!t.csw || t.csw->tag != t.tag) fail("host_buffer: CSW tag does not echo the CBW tag");
    }
  }
  result.expectation_met = result.failures.empty();
  return result;
}

std::string render_run_json(const RunResult& r) {
  ojson j;
  j["name"] = r.name;
  j["seed"] = r.seed;
  j["verdict"] = verdict_name(r.report.verdict);
  j["expectation_met"] = r.expectation_met;
  j["failures"] = r.failures;
  ojson rep;
  rep["victim_address"] = r.report.victim_address;
  rep["total_attributed"] = r.report.total_attributed;
  rep["forged_attributed"] = r.report.forged_attributed;
  rep["forged_data"] = r.report.forged_data;
  rep["forged_delivered"] = r.report.forged_delivered;
  rep["victim_delivered"] = r.report.victim_delivered;
  rep["victim_data_sent"] = r.report.victim_data_sent;
  rep["delivery_rate"] = r.report.delivery_rate;
  rep["garbles"] = r.report.garbles;
  rep["timeouts"] = r.report.timeouts;
  j["report"] = rep;
  j["keystrokes"] = r.keystrokes;
  j["mouse_reports"] = r.mouse_reports;
  ojson transfers = ojson::array();
  for (const MsdSummary& t : r.transfers) {
    ojson x;
    x["tag"] = t.tag;
    x["requested"] = t.requested;
    x["received"] = t.data.size();
    x["fnv1a"] = hex64(fnv1a(t.data));
    x["complete"] = t.complete;
    if (t.csw) {
      x["csw_tag"] = t.csw->tag;
      x["csw_status"] = t.csw->status;
    }
    transfers.push_back(x);
  }
  j["transfers"] = transfers;
  ojson inj;
  inj["data_injected"] = r.injector.data_injected;
  inj["naks_injected"] = r.injector.naks_injected;
  inj["acks_injected"] = r.injector.acks_injected;
  inj["cbws_parsed"] = r.injector.cbws_parsed;
  j["injector"] = inj;
  ojson en = ojson::array();
  for (const EnumerationState& st : r.enumeration) {
    ojson x;
    x["node"] = st.node < r.node_names.size() ? r.node_names[st.node] : std::to_string(st.node);
    x["address"] = st.address;
    x["phase"] = enum_phase_name(st.phase);
    x["attachment"] = st.attachment;
    en.push_back(x);
  }
  j["enumeration"] = en;
  j["records"] = r.records.size();
  j["policy_decisions"] = r.policy_log.size();
  j["strays"] = r.strays;
  j["collisions"] = r.collisions;
  return j.dump(2) + "\n";
}

std::string render_run_text(const RunResult& r) {
  std::ostringstream os;
  os << "scenario " << r.name << " (seed " << r.seed << ")\n";
  os << render_report_table(r.report);
  if (!r.keystrokes.empty()) os << "keystrokes          \"" << r.keystrokes << "\"\n";
  for (const MsdSummary& t : r.transfers) {
    os << "read tag=" << t.tag << " requested=" << t.requested << " received=" << t.data.size()
       << (t.complete ? "" : " incomplete") << '\n';
  }
  if (r.expectation_met) {
    os << "expectation met\n";
  } else {
    for (const std::string& f : r.failures) os << "FAILED " << f << '\n';
  }
  return os.str();
}

void write_run_outputs(const ScenarioConfig& c, const RunResult& r, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  if (r.trace && !c.trace_out.empty()) {
    export_trace_file(*r.trace, (fs::path(out_dir) / c.trace_out).string());
  }
  if (!c.report_out.empty()) {
    const std::string path = (fs::path(out_dir) / c.report_out).string();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw UsbError(Errc::Io, "cannot write " + path);
    f << render_run_json(r);
  }
}

// --- matrix sweeps -----------------------------------------------------------

std::string_view tier_law_name(TierLaw law) {
  switch (law) {
    case TierLaw::HighSpeed: return "hs";
    case TierLaw::ClassicUnderHighSpeed: return "classic-under-hs";
    case TierLaw::HubSpoof: return "hub-spoof";
    case TierLaw::ClassicCommon: return "classic-common";
  }
  return "?";
}

std::optional<TierLaw> parse_tier_law(std::string_view text) {
  for (TierLaw l : kAllTierLaws) {
    if (tier_law_name(l) == text) return l;
  }
  return std::nullopt;
}

bool tier_law_predicts_injection(TierLaw law, int ti, int tv) {
  switch (law) {
    case TierLaw::HighSpeed: return ti <= tv;
    case TierLaw::ClassicUnderHighSpeed: return ti == 2 && tv == 2;
    case TierLaw::HubSpoof: return ti < tv;
    case TierLaw::ClassicCommon: return true;
  }
  return false;
}

namespace {

NodeSpec hub_node(std::string id, std::string parent, int port, Speed speed, TtMode tt,
                  CollisionPolicy policy, bool embedded) {
  NodeSpec n;
  n.id = std::move(id);
  n.is_hub = true;
  n.parent = std::move(parent);
  n.port = port;
  n.hub.speed = speed;
  n.hub.tt_mode = tt;
  n.hub.collision = policy;
  n.hub.embedded = embedded;
  return n;
}

NodeSpec device_node(std::string id, std::string parent, int port, DeviceKind kind,
                     std::string model, Speed speed) {
  NodeSpec n;
  n.id = std::move(id);
  n.parent = std::move(parent);
  n.port = port;
  n.device.kind = kind;
  n.device.model = std::move(model);
  n.device.speed = speed;
  return n;
}

// Chain of tier-2 intermediate hubs below parent:port; returns the attach point.
std::pair<std::string, int> add_chain(ScenarioConfig& c, const std::string& prefix,
                                      std::string parent, int port, int tier, Speed speed) {
  for (int k = 0; k < tier - 2; ++k) {
    const std::string id = prefix + std::to_string(k + 1);
    c.topology.push_back(hub_node(id, parent, port, speed, TtMode::SingleTT,
                                  CollisionPolicy::GarbleError, false));
    parent = id;
    port = 1;
  }
  return {parent, port};
}

}  // namespace

ScenarioConfig tier_scenario(TierLaw law, int ti, int tv, std::uint64_t seed) {
  ScenarioConfig c;
  c.name = std::string(tier_law_name(law)) + "-ti" + std::to_string(ti) + "-tv" +
           std::to_string(tv);
  c.seed = seed;
  const bool classic_common = law == TierLaw::ClassicCommon;
  const Speed hub_speed = classic_common ? Speed::Full : Speed::High;
  c.topology.push_back(hub_node("common", "host", 1, hub_speed, TtMode::SingleTT,
                                CollisionPolicy::FirstWins, true));
  const auto [vp, vport] = add_chain(c, "vhub", "common", 1, tv, hub_speed);
  const auto [ip, iport] = add_chain(c, "ihub", "common", 2, ti, hub_speed);

  AttackSpec a;
  a.injector = "injector";
  a.victim = "victim";
  if (law == TierLaw::HighSpeed) {
    c.topology.push_back(device_node("victim", vp, vport, DeviceKind::MassStorage, "", Speed::High));
    c.topology.push_back(device_node("injector", ip, iport, DeviceKind::Injector, "serial", Speed::High));
    a.mode = InjectorMode::FileHijack;
    c.reads.push_back(MsdRead{"", SimTime{8'000'000}, 0, 1024});
    c.duration = SimTime{14'000'000};
  } else {
    c.topology.push_back(device_node("victim", vp, vport, DeviceKind::Keyboard, "dell", Speed::Low));
    const bool spoof = law == TierLaw::HubSpoof;
    c.topology.push_back(device_node("injector", ip, iport, DeviceKind::Injector,
                                     spoof ? "serial" : "mouse", spoof ? Speed::High : Speed::Low));
    a.mode = InjectorMode::KeystrokeInject;
    a.payload_text = "a";
    a.hub_spoof = spoof;
    c.duration = SimTime{40'000'000};
  }
  c.attack = a;
  return c;
}

TtCellExpectation tt_cell_expectation(TtMode mode, CollisionPolicy policy, Speed speed) {
  TtCellExpectation e;
  const bool isolated = mode == TtMode::MultiTT && is_classic(speed);
  e.injection = policy == CollisionPolicy::FirstWins && !isolated;
  e.dos = !isolated;
  return e;
}

ScenarioConfig tt_cell_scenario(TtMode mode, CollisionPolicy policy, Speed speed, bool dos,
                                std::uint64_t seed) {
  ScenarioConfig c;
  c.name = std::string(tt_mode_name(mode)) + "-" + std::string(collision_policy_name(policy)) +
           "-" + std::string(speed_name(speed)) + (dos ? "-dos" : "-inject");
  c.seed = seed;
  c.topology.push_back(hub_node("hub", "host", 1, Speed::High, mode, policy, false));
  AttackSpec a;
  a.injector = "injector";
  a.victim = "victim";
  switch (speed) {
    case Speed::Low:
    case Speed::Full: {
      const bool low = speed == Speed::Low;
      NodeSpec v = device_node("victim", "hub", 1, DeviceKind::Keyboard, low ? "dell" : "corsair", speed);
      v.device.typed_text = "hello";
      c.topology.push_back(v);
      c.topology.push_back(device_node("injector", "hub", 2, DeviceKind::Injector, "mouse", speed));
      a.mode = dos ? InjectorMode::DosNak : InjectorMode::KeystrokeInject;
      a.payload_text = "pwned";
      c.duration = SimTime{low ? 80'000'000 : 30'000'000};
      break;
    }
    case Speed::High:
      c.topology.push_back(device_node("victim", "hub", 1, DeviceKind::MassStorage, "", speed));
      c.topology.push_back(device_node("injector", "hub", 2, DeviceKind::Injector, "serial", speed));
      a.mode = dos ? InjectorMode::DosNak : InjectorMode::FileHijack;
      c.reads.push_back(MsdRead{"", SimTime{5'000'000}, 0, 1024});
      c.duration = SimTime{12'000'000};
      break;
  }
  c.attack = a;
  return c;
}

ScenarioConfig root_isolation_scenario(InjectorMode mode, std::uint64_t seed) {
  ScenarioConfig c;
  c.name = "root-isolation-" + std::string(injector_mode_name(mode));
  c.seed = seed;
  AttackSpec a;
  a.mode = mode;
  a.injector = "injector";
  a.victim = "victim";
  const bool storage = mode == InjectorMode::FileHijack || mode == InjectorMode::BootHijack;
  if (storage) {
    c.topology.push_back(device_node("victim", "host", 1, DeviceKind::MassStorage, "", Speed::High));
    c.topology.push_back(device_node("injector", "host", 2, DeviceKind::Injector, "serial", Speed::High));
    c.reads.push_back(MsdRead{"", SimTime{3'000'000}, 0, 32 * kBlockSize});
    c.duration = SimTime{15'000'000};
  } else {
    NodeSpec v = device_node("victim", "host", 1, DeviceKind::Keyboard, "dell", Speed::Low);
    v.device.typed_text = "hello";
    c.topology.push_back(v);
    c.topology.push_back(device_node("injector", "host", 2, DeviceKind::Injector, "mouse", Speed::Low));
    a.payload_text = "pwned";
    c.duration = SimTime{120'000'000};
  }
  c.attack = a;
  c.expect.verdict = Verdict::Safe;
  return c;
}

MatrixSpec parse_matrix_spec(std::string_view json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& ex) {
    throw UsbError(Errc::SchemaViolation, std::string("not valid JSON: ") + ex.what());
  }
  if (!root.is_object()) schema("<root>", "expected an object");
  MatrixSpec m;
  if (auto v = opt<std::string>(root, "name", "")) m.name = *v;
  const std::string kind = req<std::string>(root, "kind", "");
  if (kind == "tt-matrix") {
    m.kind = MatrixKind::TtMatrix;
  } else if (kind == "tier-sweep") {
    m.kind = MatrixKind::TierSweep;
  } else {
    schema("kind", "expected tt-matrix or tier-sweep");
  }
  if (auto v = opt<std::uint64_t>(root, "seed", "")) m.seed = *v;
  m.duration = opt_ms(root, "duration_ms", "");
  if (root.contains("laws")) {
    const json& laws = root.at("laws");
    if (!laws.is_array()) schema("laws", "expected an array");
    m.laws.clear();
    for (std::size_t i = 0; i < laws.size(); ++i) {
      const std::string path = "laws[" + std::to_string(i) + "]";
      if (!laws[i].is_string()) schema(path, "expected a string");
      auto law = parse_tier_law(laws[i].get<std::string>());
      if (!law) schema(path, "unknown law '" + laws[i].get<std::string>() + "'");
      m.laws.push_back(*law);
    }
  }
  if (root.contains("tiers")) {
    const json& t = root.at("tiers");
    if (!t.is_array() || t.size() != 2 || !t[0].is_number_integer() || !t[1].is_number_integer()) {
      schema("tiers", "expected [min, max]");
    }
    m.tier_min = t[0].get<int>();
    m.tier_max = t[1].get<int>();
    if (m.tier_min < 2 || m.tier_max > 7 || m.tier_min > m.tier_max) {
      schema("tiers", "must satisfy 2 <= min <= max <= 7");
    }
  }
  return m;
}

MatrixSpec load_matrix_spec(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw UsbError(Errc::Io, "cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_matrix_spec(ss.str());
}

MatrixResult run_matrix(const MatrixSpec& spec, int jobs) {
  MatrixResult out;
  out.name = spec.name;
  out.kind = spec.kind;

  std::vector<std::function<MatrixCell()>> work;
  auto with_duration = [&spec](ScenarioConfig c) {
    if (spec.duration) c.duration = *spec.duration;
    c.tap = "";
    return c;
  };
  if (spec.kind == MatrixKind::TtMatrix) {
    for (TtMode mode : {TtMode::SingleTT, TtMode::MultiTT}) {
      for (CollisionPolicy policy : {CollisionPolicy::FirstWins, CollisionPolicy::GarbleError}) {
        for (Speed speed : {Speed::Low, Speed::Full, Speed::High}) {
          work.push_back([=, &spec] {
            MatrixCell cell;
            cell.row = std::string(tt_mode_name(mode)) + "/" +
                       std::string(collision_policy_name(policy));
            cell.column = std::string(speed_name(speed));
            const RunResult inj =
                run_scenario(with_duration(tt_cell_scenario(mode, policy, speed, false, spec.seed)));
            const RunResult dos =
                run_scenario(with_duration(tt_cell_scenario(mode, policy, speed, true, spec.seed)));
            cell.inject_verdict = inj.report.verdict;
            cell.injection = inj.report.verdict == Verdict::InjectionSucceeded;
            cell.dos = dos.report.victim_data_sent > 0 && dos.report.victim_delivered == 0;
            const TtCellExpectation e = tt_cell_expectation(mode, policy, speed);
            cell.expected_injection = e.injection;
            cell.expected_dos = e.dos;
            cell.dos_checked = true;
            cell.matches = cell.injection == e.injection && cell.dos == e.dos;
            return cell;
          });
        }
      }
    }
  } else {
    for (TierLaw law : spec.laws) {
      for (int ti = spec.tier_min; ti <= spec.tier_max; ++ti) {
        for (int tv = spec.tier_min; tv <= spec.tier_max; ++tv) {
          work.push_back([=, &spec] {
            MatrixCell cell;
            cell.row = std::string(tier_law_name(law));
            cell.column = "ti=" + std::to_string(ti) + " tv=" + std::to_string(tv);
            const RunResult r = run_scenario(with_duration(tier_scenario(law, ti, tv, spec.seed)));
            cell.inject_verdict = r.report.verdict;
            cell.injection = r.report.verdict == Verdict::InjectionSucceeded;
            cell.expected_injection = tier_law_predicts_injection(law, ti, tv);
            cell.matches = cell.injection == cell.expected_injection;
            return cell;
          });
        }
      }
    }
  }

  std::vector<MatrixCell> cells(work.size());
  std::vector<std::exception_ptr> errors(work.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < work.size(); i = next++) {
      try {
        cells[i] = work[i]();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int n = std::max(1, std::min<int>(jobs, static_cast<int>(work.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  out.cells = std::move(cells);
  out.all_match = std::all_of(out.cells.begin(), out.cells.end(),
                              [](const MatrixCell& c) { return c.matches; });
  return out;
}

std::string render_matrix_text(const MatrixResult& r) {
  std::ostringstream os;
  auto mark = [](bool b) { return b ? "yes" : "-"; };
  os << std::left << std::setw(22) << "row" << std::setw(14) << "cell" << std::setw(20)
     << "verdict" << std::setw(8) << "inject" << std::setw(8) << "dos" << std::setw(10)
     << "expected" << "match\n";
  std::size_t ok = 0;
  for (const MatrixCell& c : r.cells) {
    std::string expected = mark(c.expected_injection);
    if (c.dos_checked) expected += std::string("/") + mark(c.expected_dos);
    os << std::setw(22) << c.row << std::setw(14) << c.column << std::setw(20)
       << verdict_name(c.inject_verdict) << std::setw(8) << mark(c.injection) << std::setw(8)
       << (c.dos_checked ? mark(c.dos) : "n/a") << std::setw(10) << expected
       << (c.matches ? "ok" : "MISMATCH") << '\n';
    if (c.matches) ++ok;
  }
  os << ok << "/" << r.cells.size() << " cells match\n";
  return os.str();
}

std::string render_matrix_json(const MatrixResult& r) {
  ojson j;
  j["name"] = r.name;
  j["kind"] = r.kind == MatrixKind::TtMatrix ? "tt-matrix" : "tier-sweep";
  j["all_match"] = r.all_match;
  ojson cells = ojson::array();
  for (const MatrixCell& c : r.cells) {
    ojson x;
    x["row"] = c.row;
    x["cell"] = c.column;
    x["verdict"] = verdict_name(c.inject_verdict);
    x["injection"] = c.injection;
    x["expected_injection"] = c.expected_injection;
    if (c.dos_checked) {
      x["dos"] = c.dos;
      x["expected_dos"] = c.expected_dos;
    }
    x["matches"] = c.matches;
    cells.push_back(x);
  }
  j["cells"] = cells;
  return j.dump(2) + "\n";
}

}  // namespace usbinject
