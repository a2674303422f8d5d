#include <algorithm>

#include "doctest.h"
#include "patchflow/scenario.hpp"

using namespace patchflow;
using nlohmann::json;

namespace {

json minimal_doc() {
  return json::parse(R"({
    "seed": 1, "duration_us": 1000000, "probe_period_us": 100000,
    "policy": "collaborative", "calibration": "hyperlpr",
    "nodes": [
      {"node_id": "cloud", "role": "cloud"},
      {"node_id": "e1", "role": "edge", "patch_soft_threshold": 5, "neighbors": []}
    ],
    "links": [
      {"src": "c1", "dst": "e1", "bandwidth_bps": 1e8},
      {"src": "e1", "dst": "cloud", "bandwidth_bps": 1e8, "propagation_delay_us": 5000},
      {"src": "cloud", "dst": "e1", "bandwidth_bps": 1e8, "propagation_delay_us": 5000}
    ],
    "cameras": [{"camera_id": "c1", "fps": 10, "frame_size_mean_bytes": 100000}]
  })");
}

bool has_error(const ValidationResult& r, const std::string& needle) {
  return std::any_of(r.errors.begin(), r.errors.end(),
                     [&](const std::string& e) { return e.find(needle) != std::string::npos; });
}

}  // namespace

TEST_CASE("the smallest valid topology has three links") {
  const auto r = validate_scenario(minimal_doc());
  REQUIRE(r.ok());
  CHECK(r.errors.empty());
  CHECK(r.scenario->nodes.size() == 2);
  CHECK(r.scenario->camera_edge("c1").node_id == "e1");
  CHECK(r.scenario->cloud().node_id == "cloud");

  json two = minimal_doc();
  two["links"].erase(2);
  const auto r2 = validate_scenario(two);
  CHECK_FALSE(r2.ok());
  CHECK(has_error(r2, "edge e1 has no link from the cloud"));
}

TEST_CASE("an unresolved neighbor is named") {
  json d = minimal_doc();
  d["nodes"][1]["neighbors"] = {"e9"};
  const auto r = validate_scenario(d);
  CHECK_FALSE(r.ok());
  CHECK(has_error(r, "unresolved neighbor e9"));
}

TEST_CASE("two clouds are rejected") {
  json d = minimal_doc();
  d["nodes"].push_back({{"node_id", "cloud2"}, {"role", "cloud"}});
  const auto r = validate_scenario(d);
  CHECK(has_error(r, "exactly one cloud node required"));
}

TEST_CASE("every violation is reported, not just the first") {
  json d = minimal_doc();
  d["links"].push_back(d["links"][1]);
  d["links"][0]["bandwidth_bps"] = 0;
  d["nodes"][1]["neighbors"] = {"ghost"};
  d["bogus"] = 1;
  const auto r = validate_scenario(d);
  CHECK_FALSE(r.ok());
  CHECK(has_error(r, "duplicate link e1->cloud"));
  CHECK(has_error(r, "non-positive bandwidth on link c1->e1"));
  CHECK(has_error(r, "unresolved neighbor ghost"));
  CHECK(has_error(r, "unknown key 'bogus'"));
  CHECK(r.errors.size() >= 4);
}

TEST_CASE("unknown keys are rejected at every level") {
  json d = minimal_doc();
  d["nodes"][1]["colour"] = "red";
  d["cameras"][0]["zoom"] = 2;
  const auto r = validate_scenario(d);
  CHECK(has_error(r, "unknown key 'colour'"));
  CHECK(has_error(r, "unknown key 'zoom'"));
}

TEST_CASE("neighbors need links both ways") {
  json d = minimal_doc();
  d["nodes"].push_back({{"node_id", "e2"}, {"role", "edge"}, {"patch_soft_threshold", 5}, {"neighbors", {"e1"}}});
  d["nodes"][1]["neighbors"] = {"e2"};
  d["links"].push_back({{"src", "e2"}, {"dst", "cloud"}, {"bandwidth_bps", 1e8}});
  d["links"].push_back({{"src", "cloud"}, {"dst", "e2"}, {"bandwidth_bps", 1e8}});
  d["links"].push_back({{"src", "e1"}, {"dst", "e2"}, {"bandwidth_bps", 1e8}});
  auto r = validate_scenario(d);
  CHECK(has_error(r, "missing link e2->e1"));
  d["links"].push_back({{"src", "e2"}, {"dst", "e1"}, {"bandwidth_bps", 1e8}});
  r = validate_scenario(d);
  CHECK(r.ok());
}

TEST_CASE("a camera must feed exactly one edge") {
  json d = minimal_doc();
  d["links"].erase(0);
  CHECK(has_error(validate_scenario(d), "camera c1 has no edge link"));
}

TEST_CASE("frame queue capacity forms") {
  json d = minimal_doc();
  d["nodes"][1]["frame_queue_capacity"] = 4;
  CHECK(validate_scenario(d).scenario->nodes[1].frame_queue_capacity == 4u);
  d["nodes"][1]["frame_queue_capacity"] = "unbounded";
  CHECK_FALSE(validate_scenario(d).scenario->nodes[1].frame_queue_capacity);
  d["nodes"][1]["frame_queue_capacity"] = nullptr;
  CHECK_FALSE(validate_scenario(d).scenario->nodes[1].frame_queue_capacity);
  d["nodes"][1]["frame_queue_capacity"] = 0;
  CHECK_FALSE(validate_scenario(d).ok());
  d["nodes"][1]["frame_queue_capacity"] = "lots";
  CHECK_FALSE(validate_scenario(d).ok());
}

TEST_CASE("calibration overrides apply on top of the preset") {
  json d = minimal_doc();
  d["calibration_overrides"] = {{"recognition_time_edge_us", {{"mean", 60000}, {"jitter", 0}}},
                                {"plates_per_frame", {{"1", 1.0}}},
                                {"patch_size_ratio", 0.5}};
  const auto r = validate_scenario(d);
  REQUIRE(r.ok());
  const auto p = recognition_profile(*r.scenario, r.scenario->nodes[1]);
  CHECK(p.recognition_time_edge_us.mean_us == 60000);
  CHECK(p.recognition_time_edge_us.jitter == 0);
  CHECK(p.plates_per_frame == std::array<double, 4>{0, 1, 0, 0});
  CHECK(p.patch_size_ratio == 0.5);
  CHECK(p.extraction_time_us.mean_us == 50000);

  d["calibration_overrides"] = {{"plates_per_frame", {{"1", 0.5}}}};
  CHECK(has_error(validate_scenario(d), "sum to 1"));
  d["calibration"] = "nonesuch";
  CHECK(has_error(validate_scenario(d), "unknown calibration nonesuch"));
}

TEST_CASE("per-node profiles override the scenario calibration") {
  json d = minimal_doc();
  d["nodes"][1]["extraction_profile"] = "yolo";
  const auto r = validate_scenario(d);
  REQUIRE(r.ok());
  CHECK(extraction_profile(*r.scenario, r.scenario->nodes[1]).name == "yolo");
  CHECK(recognition_profile(*r.scenario, r.scenario->nodes[1]).name == "hyperlpr");
}

TEST_CASE("offload_only must name edges") {
  json d = minimal_doc();
  d["experiment"] = {{"offload_only", {"cloud"}}};
  CHECK(has_error(validate_scenario(d), "offload_only names cloud"));
  d["experiment"] = {{"offload_only", {"e1"}}};
  const auto r = validate_scenario(d);
  REQUIRE(r.ok());
  CHECK_FALSE(r.scenario->experiment.recognizes_locally("e1"));
}

TEST_CASE("scenarios round-trip through JSON") {
  json d = minimal_doc();
  d["transport"] = {{"e1", {{"host", "127.0.0.1"}, {"port", 4000}}}};
  d["experiment"] = {{"local_recognition", false}};
  const auto r = validate_scenario(d);
  REQUIRE(r.ok());
  const auto again = validate_scenario(to_json(*r.scenario));
  REQUIRE(again.ok());
  CHECK(*again.scenario == *r.scenario);
}

TEST_CASE("missing files are I/O errors, bad JSON is a validation error") {
  CHECK_THROWS_AS(load_scenario_file("/nonexistent/scenario.json"), IoError);
  const auto r = load_scenario_file(PATCHFLOW_SCENARIOS "/minimal.json");
  CHECK(r.ok());
}

TEST_CASE("shipped scenarios are valid") {
  for (const char* name : {"minimal", "burst_reference", "traffic_reference", "live_loopback"}) {
    CAPTURE(name);
    const auto r = load_scenario_file(std::string(PATCHFLOW_SCENARIOS) + "/" + name + ".json");
    CHECK(r.errors.empty());
  }
}
