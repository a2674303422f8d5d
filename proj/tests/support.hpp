#pragma once

// Helpers shared by the engine tests and the acceptance binary.

#include <algorithm>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchflow/engine.hpp"
#include "patchflow/rng.hpp"
#include "patchflow/scenario.hpp"

namespace patchflow::testing {

inline Scenario load_shipped(const std::string& name) {
  auto v = load_scenario_file(std::string(PATCHFLOW_SCENARIOS) + "/" + name);
  if (!v.ok()) throw std::runtime_error("invalid shipped scenario " + name);
  return *v.scenario;
}

// A small random topology: up to 5 edges with up to 3 cameras each and at
// most 1000 frames in total.
inline Scenario random_scenario(std::uint64_t seed) {
  RandomStream r(seed, "test", "scenario");
  auto pick = [&](std::uint64_t lo, std::uint64_t hi) { return lo + r.next_u64() % (hi - lo + 1); };
  const std::uint64_t edges = pick(1, 5);
  const char* policies[] = {"edge-only", "cloud-only", "collaborative"};
  const char* presets[] = {"hyperlpr", "yolo", "mtcnn"};

  nlohmann::json nodes = nlohmann::json::array({{{"node_id", "cloud"}, {"role", "cloud"}}});
  nlohmann::json links = nlohmann::json::array();
  nlohmann::json cameras = nlohmann::json::array();
  auto link = [&](const std::string& a, const std::string& b, double bw, std::uint64_t prop) {
    links.push_back({{"src", a}, {"dst", b}, {"bandwidth_bps", bw}, {"propagation_delay_us", prop}});
  };

  std::uint64_t camera_count = 0;
  std::vector<std::uint64_t> per_edge;
  for (std::uint64_t e = 1; e <= edges; ++e) {
    per_edge.push_back(pick(e == 1 ? 1 : 0, 3));
    camera_count += per_edge.back();
  }
  const std::uint64_t duration_s = pick(2, 20);
  // Keep the expected frame total well under 1000.
  const double max_fps = std::min(5.0, 800.0 / static_cast<double>(camera_count * duration_s));

  for (std::uint64_t e = 1; e <= edges; ++e) {
    const std::string id = "e" + std::to_string(e);
    nlohmann::json neighbors = nlohmann::json::array();
    for (std::uint64_t o = 1; o <= edges; ++o) {
      if (o != e && r.next_unit() < 0.6) {
        neighbors.push_back("e" + std::to_string(o));
      }
    }
    nlohmann::json node = {{"node_id", id}, {"role", "edge"}, {"patch_soft_threshold", pick(1, 6)},
                           {"neighbors", neighbors}};
    if (r.next_unit() < 0.3) node["frame_queue_capacity"] = pick(1, 4);
    nodes.push_back(node);
    link(id, "cloud", 1e7 * static_cast<double>(pick(1, 100)), pick(0, 20000));
    link("cloud", id, 1e7 * static_cast<double>(pick(1, 100)), pick(0, 20000));
    for (std::uint64_t c = 1; c <= per_edge[e - 1]; ++c) {
      const std::string cam = "c" + std::to_string(e) + "_" + std::to_string(c);
      nlohmann::json camera = {{"camera_id", cam},
                               {"fps", 0.2 + r.next_unit() * (max_fps - 0.2)},
                               {"frame_size_mean_bytes", pick(10'000, 2'000'000)},
                               {"frame_size_jitter", r.next_unit() * 0.3}};
      if (r.next_unit() < 0.3) {
        const std::uint64_t start = pick(0, duration_s * 500'000);
        camera["bursts"] = nlohmann::json::array(
            {{{"start_us", start}, {"end_us", start + 500'000}, {"rate_multiplier", 1.0 + r.next_unit()}}});
      }
      cameras.push_back(camera);
      link(cam, id, 1e9, 0);
    }
  }
  // Neighbor links must exist in both directions.
  for (const auto& n : nodes) {
    if (!n.contains("neighbors")) continue;
    for (const auto& o : n["neighbors"]) {
      const std::string a = n["node_id"], b = o;
      auto has = [&](const std::string& s, const std::string& d) {
        return std::any_of(links.begin(), links.end(),
                           [&](const nlohmann::json& l) { return l["src"] == s && l["dst"] == d; });
      };
      if (!has(a, b)) link(a, b, 1e8, pick(0, 5000));
      if (!has(b, a)) link(b, a, 1e8, pick(0, 5000));
    }
  }

  nlohmann::json doc = {{"seed", seed},
                        {"duration_us", duration_s * 1'000'000},
                        {"probe_period_us", pick(20'000, 300'000)},
                        {"policy", policies[pick(0, 2)]},
                        {"calibration", presets[pick(0, 2)]},
                        {"nodes", nodes},
                        {"links", links},
                        {"cameras", cameras}};
  auto v = validate_scenario(doc);
  if (!v.ok()) {
    std::string msg = "random scenario " + std::to_string(seed) + " is invalid:";
    for (const auto& e : v.errors) msg += " " + e + ";";
    throw std::logic_error(msg);
  }
  return *v.scenario;
}

// Every violated conservation property of a finished run; empty means all hold.
inline std::vector<std::string> conservation_violations(const SimResults& r) {
  std::vector<std::string> out;
  const auto& c = r.counters;
  if (c.patches_created != c.recognition_records)
    out.push_back("patches_created " + std::to_string(c.patches_created) + " != recognition_records " +
                  std::to_string(c.recognition_records));
  if (r.patches.size() != c.patches_created) out.push_back("patch table size differs from patches_created");
  if (r.records.size() != c.recognition_records) out.push_back("record count differs from the counter");

  std::map<std::string, int> seen;
  for (const auto& rec : r.records) ++seen[rec.patch_id];
  for (const auto& t : r.patches) {
    const auto& id = t.patch.patch_id;
    if (t.dispatch_count != 1) out.push_back(id + " dispatched " + std::to_string(t.dispatch_count) + " times");
    if (!t.completed_at) out.push_back(id + " never completed");
    if (seen[id] != 1) out.push_back(id + " has " + std::to_string(seen[id]) + " records");
    if (t.completed_at) {
      const Duration e2e = *t.completed_at - t.patch.capture_time;
      if (t.latency.total() != e2e)
        out.push_back(id + " latency components sum to " + std::to_string(t.latency.total()) + ", not " +
                      std::to_string(e2e));
    }
  }
  std::map<std::string, const PatchTrace*> by_id;
  for (const auto& t : r.patches) by_id[t.patch.patch_id] = &t;
  for (const auto& rec : r.records) {
    auto it = by_id.find(rec.patch_id);
    if (it == by_id.end()) out.push_back(rec.patch_id + " has a record but no patch");
    else if (rec.end_to_end_latency != it->second->latency.total()) out.push_back(rec.patch_id + " record latency mismatch");
  }

  // Patch queues are FIFO: dispatch order follows enqueue order per origin.
  std::map<std::string, std::vector<const PatchTrace*>> by_origin;
  for (const auto& t : r.patches) by_origin[t.patch.origin_node].push_back(&t);
  for (auto& [origin, list] : by_origin) {
    std::sort(list.begin(), list.end(), [](auto a, auto b) { return a->queue_seq < b->queue_seq; });
    for (std::size_t i = 1; i < list.size(); ++i)
      if (list[i]->dispatched_at < list[i - 1]->dispatched_at)
        out.push_back("queue at " + origin + " dispatched " + list[i]->patch.patch_id + " before " +
                      list[i - 1]->patch.patch_id);
  }
  // Each executor serves its own queue and its incoming FIFO in arrival order.
  std::map<std::pair<std::string, bool>, std::vector<const PatchTrace*>> by_queue;
  for (const auto& t : r.patches)
    if (t.completed_at) by_queue[{t.executed_by, t.path == DispatchPath::Local}].push_back(&t);
  for (auto& [key, list] : by_queue) {
    std::sort(list.begin(), list.end(), [](auto a, auto b) {
      return std::tie(a->arrived_at, a->service_start) < std::tie(b->arrived_at, b->service_start);
    });
    for (std::size_t i = 1; i < list.size(); ++i)
      if (list[i]->service_start < list[i - 1]->service_start)
        out.push_back("FIFO violated at " + key.first + " for " + list[i]->patch.patch_id);
  }
  return out;
}

}  // namespace patchflow::testing
