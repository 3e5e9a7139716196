#include <gtest/gtest.h>

#include <filesystem>

#include "json.hpp"
#include "usbinject/error.hpp"
#include "usbinject/scenario.hpp"

using namespace usbinject;
using json = nlohmann::json;

namespace {

json minimal() {
  return json::parse(R"({
    "name": "t",
    "topology": [
      {"id": "hub", "kind": "hub", "parent": "host", "port": 1},
      {"id": "kb", "kind": "device", "class": "keyboard", "parent": "hub", "port": 1}
    ]
  })");
}

// Error code and message from parsing doc.
std::pair<Errc, std::string> parse_error(const json& doc) {
  try {
    parse_scenario(doc.dump());
  } catch (const UsbError& e) {
    return {e.code(), e.what()};
  }
  ADD_FAILURE() << "accepted: " << doc.dump();
  return {Errc::Io, ""};
}

json hub_chain(int hubs, int embedded_at = -1) {
  json doc = minimal();
  doc["topology"] = json::array();
  std::string parent = "host";
  for (int i = 1; i <= hubs; ++i) {
    json h = {{"id", "h" + std::to_string(i)}, {"kind", "hub"}, {"parent", parent}, {"port", 1}};
    if (i == embedded_at) h["embedded"] = true;
    doc["topology"].push_back(h);
    parent = "h" + std::to_string(i);
  }
  doc["topology"].push_back(
      {{"id", "kb"}, {"kind", "device"}, {"class", "keyboard"}, {"parent", parent}, {"port", 1}});
  return doc;
}

}  // namespace

TEST(ScenarioSchema, MinimalDocumentParses) {
  const ScenarioConfig c = parse_scenario(minimal().dump());
  ASSERT_EQ(c.topology.size(), 2u);
  EXPECT_TRUE(c.topology[0].is_hub);
  EXPECT_EQ(c.topology[1].device.kind, DeviceKind::Keyboard);
  EXPECT_FALSE(c.attack);
}

TEST(ScenarioSchema, ErrorsNameTheOffendingField) {
  json doc = minimal();
  doc["topology"][0]["tt"] = "TripleTT";
  auto [code, what] = parse_error(doc);
  EXPECT_EQ(code, Errc::SchemaViolation);
  EXPECT_NE(what.find("tt"), std::string::npos) << what;

  doc = minimal();
  doc.erase("topology");
  std::tie(code, what) = parse_error(doc);
  EXPECT_EQ(code, Errc::SchemaViolation);
  EXPECT_NE(what.find("topology"), std::string::npos);

  doc = minimal();
  doc["topology"][1]["port"] = "one";
  std::tie(code, what) = parse_error(doc);
  EXPECT_EQ(code, Errc::SchemaViolation);
  EXPECT_NE(what.find("port"), std::string::npos);

  doc = minimal();
  doc["attack"] = {{"mode", "KeystrokeInject"}, {"injector", "kb"}, {"victim", "kb"}};
  std::tie(code, what) = parse_error(doc);
  EXPECT_EQ(code, Errc::SchemaViolation);
  EXPECT_NE(what.find("attack.injector"), std::string::npos);

  EXPECT_EQ(parse_error(json::parse("[1,2]")).first, Errc::SchemaViolation);
  try {
    parse_scenario("{not json");
    FAIL();
  } catch (const UsbError& e) {
    EXPECT_EQ(e.code(), Errc::SchemaViolation);
  }
}

TEST(ScenarioTopology, ChainLimitIsFiveStandardHubs) {
  EXPECT_NO_THROW(parse_scenario(hub_chain(5).dump()));
  EXPECT_EQ(parse_error(hub_chain(6)).first, Errc::TopologyInvariantViolation);
  EXPECT_NO_THROW(parse_scenario(hub_chain(6, 1).dump()));
}

TEST(ScenarioTopology, StructuralViolations) {
  json doc = minimal();
  doc["topology"][1]["parent"] = "kb";
  EXPECT_EQ(parse_error(doc).first, Errc::TopologyInvariantViolation);

  doc = minimal();
  doc["topology"][1]["port"] = 9;
  EXPECT_EQ(parse_error(doc).first, Errc::TopologyInvariantViolation);

  doc = minimal();
  doc["topology"].push_back(
      {{"id", "kb2"}, {"kind", "device"}, {"class", "keyboard"}, {"parent", "hub"}, {"port", 1}});
  EXPECT_EQ(parse_error(doc).first, Errc::TopologyInvariantViolation);

  doc = minimal();
  doc["topology"] = json::array({{{"id", "a"}, {"kind", "hub"}, {"parent", "b"}, {"port", 1}},
                                 {{"id", "b"}, {"kind", "hub"}, {"parent", "a"}, {"port", 1}}});
  EXPECT_EQ(parse_error(doc).first, Errc::TopologyInvariantViolation);

  // 9 fan-out hubs of 15 ports under one root hub: 10 + 135 nodes.
  doc = minimal();
  doc["topology"] = json::array({{{"id", "top"}, {"kind", "hub"}, {"parent", "host"}, {"port", 1}, {"ports", 15}}});
  for (int h = 1; h <= 9; ++h) {
    const std::string hid = "fan" + std::to_string(h);
    doc["topology"].push_back({{"id", hid}, {"kind", "hub"}, {"parent", "top"}, {"port", h}, {"ports", 15}});
    for (int p = 1; p <= 15; ++p) {
      doc["topology"].push_back({{"id", hid + "-" + std::to_string(p)},
                                 {"kind", "device"},
                                 {"class", "mouse"},
                                 {"parent", hid},
                                 {"port", p}});
    }
  }
  EXPECT_EQ(parse_error(doc).first, Errc::TopologyInvariantViolation);
}

TEST(ScenarioFiles, ShippedConfigsLoad) {
  int loaded = 0;
  for (const auto& entry : std::filesystem::directory_iterator(USBINJECT_SCENARIO_DIR)) {
    const std::string path = entry.path().string();
    const std::string stem = entry.path().stem().string();
    if (entry.path().extension() != ".json" || stem == "tt_matrix" || stem == "tier_sweep") continue;
    if (stem.rfind("invalid_", 0) == 0) {
      EXPECT_THROW(load_scenario(path), UsbError) << path;
    } else {
      EXPECT_NO_THROW(load_scenario(path)) << path;
      ++loaded;
    }
  }
  EXPECT_GE(loaded, 10);
}

TEST(ScenarioOracles, DiskImageAndHijackBuffer) {
  const auto img = make_disk_image(4);
  ASSERT_EQ(img.size(), 4 * kBlockSize);
  for (std::size_t i = 0; i < img.size(); ++i) {
    ASSERT_EQ(img[i], static_cast<std::uint8_t>((i * 7 + (i / 512) * 13 + 1) & 0xFF));
  }
  for (std::uint32_t len : {1u, 512u, 700u, 1024u}) {
    const auto buf = hijack_buffer(len);
    EXPECT_EQ(buf.size(), (len + 511) / 512 * 512);
    for (std::size_t i = 0; i < buf.size(); ++i) ASSERT_EQ(buf[i], i < len ? 0x67 : 0x00);
  }
}

TEST(ScenarioLaws, TierPredictions) {
  for (int ti = 2; ti <= 7; ++ti) {
    for (int tv = 2; tv <= 7; ++tv) {
      EXPECT_EQ(tier_law_predicts_injection(TierLaw::HighSpeed, ti, tv), ti <= tv);
      EXPECT_EQ(tier_law_predicts_injection(TierLaw::ClassicUnderHighSpeed, ti, tv), ti == 2 && tv == 2);
      EXPECT_EQ(tier_law_predicts_injection(TierLaw::HubSpoof, ti, tv), ti < tv);
      EXPECT_TRUE(tier_law_predicts_injection(TierLaw::ClassicCommon, ti, tv));
    }
  }
}

TEST(ScenarioLaws, TtCellExpectations) {
  for (TtMode m : {TtMode::SingleTT, TtMode::MultiTT}) {
    for (CollisionPolicy p : {CollisionPolicy::FirstWins, CollisionPolicy::GarbleError}) {
      for (Speed s : {Speed::Low, Speed::Full, Speed::High}) {
        const TtCellExpectation e = tt_cell_expectation(m, p, s);
        const bool hidden = m == TtMode::MultiTT && is_classic(s);
        EXPECT_EQ(e.injection, p == CollisionPolicy::FirstWins && !hidden);
        EXPECT_EQ(e.dos, !hidden);
      }
    }
  }
}

TEST(ScenarioMatrix, ParallelCellsMatchSerialCells) {
  MatrixSpec spec;
  spec.kind = MatrixKind::TtMatrix;
  const std::string serial = render_matrix_json(run_matrix(spec, 1));
  EXPECT_EQ(render_matrix_json(run_matrix(spec, 4)), serial);
}

TEST(ScenarioMatrix, SpecParsing) {
  const MatrixSpec s = parse_matrix_spec(
      R"({"name":"m","kind":"tier-sweep","seed":4,"laws":["hs","hub-spoof"],"tiers":[3,4],"duration_ms":12})");
  EXPECT_EQ(s.kind, MatrixKind::TierSweep);
  EXPECT_EQ(s.laws, (std::vector<TierLaw>{TierLaw::HighSpeed, TierLaw::HubSpoof}));
  EXPECT_EQ(s.tier_min, 3);
  EXPECT_EQ(s.tier_max, 4);
  EXPECT_EQ(s.duration, SimTime{12'000'000});
  EXPECT_THROW(parse_matrix_spec(R"({"kind":"cube"})"), UsbError);
}

TEST(ScenarioRun, ReportJsonIsReproducible) {
  const ScenarioConfig c = load_scenario(std::string(USBINJECT_SCENARIO_DIR) + "/file_hijack_700.json");
  EXPECT_EQ(render_run_json(run_scenario(c)), render_run_json(run_scenario(c)));
}
