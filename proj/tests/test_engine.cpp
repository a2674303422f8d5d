#include <sstream>

#include "doctest.h"
#include "patchflow/engine.hpp"
#include "support.hpp"

using namespace patchflow;
using patchflow::testing::load_shipped;

namespace {

std::vector<std::string> traced(const Scenario& s) {
  std::vector<std::string> lines;
  SimOptions o;
  o.trace = [&](const std::string& l) { lines.push_back(l); };
  simulate(s, o);
  return lines;
}

}  // namespace

TEST_CASE("minimal scenario: one local patch") {
  const auto r = simulate(load_shipped("minimal.json"));
  REQUIRE(r.records.size() == 1);
  CHECK(r.records[0].patch_id == "c1/0/1");
  CHECK(r.records[0].plate_text == "c1-0-1");
  CHECK(r.records[0].processed_by == "e1");
  CHECK(r.records[0].completed_at == 100'000);
  CHECK(r.records[0].end_to_end_latency == 100'000);
  const auto& l = r.patches[0].latency;
  CHECK(l.extraction == 40'000);
  CHECK(l.recognition == 60'000);
  CHECK(l.offload_transfer == 0);
}

TEST_CASE("minimal scenario: the patch forced to the cloud") {
  auto s = load_shipped("minimal.json");
  s.experiment.local_recognition = false;
  const auto r = simulate(s);
  REQUIRE(r.records.size() == 1);
  CHECK(r.records[0].processed_by == "cloud");
  // 40000 extraction + ceil(845284 * 8e6 / 1e8) + 5000 propagation + 20000 recognition.
  CHECK(r.records[0].completed_at == 132'623);
  CHECK(r.patches[0].latency.offload_transfer == 72'623);
  CHECK(r.counters.dispatched_cloud == 1);
  CHECK(r.link_traffic.at("e1->cloud").payload_bytes == 845'220);
}

TEST_CASE("minimal scenario under cloud-only") {
  auto s = load_shipped("minimal.json");
  s.policy = Policy::CloudOnly;
  const auto r = simulate(s);
  REQUIRE(r.records.size() == 1);
  CHECK(r.records[0].processed_by == "cloud");
  // ceil(1690504 * 8e6 / 1e8) + 5000, then 15000 extraction and 20000 recognition.
  CHECK(r.records[0].completed_at == 135'241 + 5'000 + 15'000 + 20'000);
  CHECK(r.link_traffic.at("e1->cloud").payload_bytes == 1'690'440);
}

TEST_CASE("local recognition reports its result to the cloud") {
  const auto r = simulate(load_shipped("minimal.json"));
  CHECK(r.counters.results_archived == 1);
  CHECK(r.link_traffic.at("e1->cloud").bytes == kResultMessageBytes);
  CHECK(r.link_traffic.at("e1->cloud").payload_bytes == 0);
}

TEST_CASE("scheduling into the past is refused") {
  Simulation sim(load_shipped("minimal.json"));
  sim.run(50'000);
  CHECK(sim.clock() == 50'000);
  CHECK_THROWS_AS(sim.schedule({10, 0, EventKind::MetricsTick}), std::logic_error);
  CHECK_NOTHROW(sim.schedule({50'000, 0, EventKind::MetricsTick}));
}

TEST_CASE("events run in (time, sequence) order") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto lines = traced(testing::random_scenario(seed));
    std::pair<std::uint64_t, std::uint64_t> prev{0, 0};
    for (std::size_t i = 0; i < lines.size(); ++i) {
      std::istringstream in(lines[i]);
      std::pair<std::uint64_t, std::uint64_t> cur;
      in >> cur.first >> cur.second;
      if (i > 0) REQUIRE(prev < cur);
      prev = cur;
    }
  }
}

TEST_CASE("a scenario without cameras terminates") {
  auto s = load_shipped("minimal.json");
  s.cameras.clear();
  s.links.erase(s.links.begin());
  const auto r = simulate(s);
  CHECK(r.records.empty());
  CHECK(r.counters.frames_generated == 0);
}

TEST_CASE("runs are deterministic") {
  const auto s = testing::random_scenario(42);
  CHECK(traced(s) == traced(s));
  CHECK(simulate(s).records == simulate(s).records);
}

TEST_CASE("conservation holds on random scenarios") {
  for (std::uint64_t seed = 100; seed < 130; ++seed) {
    CAPTURE(seed);
    const auto s = testing::random_scenario(seed);
    const auto r = simulate(s);
    const auto v = testing::conservation_violations(r);
    CHECK_MESSAGE(v.empty(), (v.empty() ? "" : v.front()));
  }
}

TEST_CASE("replaying the generated frames reproduces the run") {
  for (std::uint64_t seed : {3u, 9u, 27u}) {
    const auto s = testing::random_scenario(seed);
    SimOptions o;
    o.replay = generate_frame_events(s);
    CHECK(simulate(s, o).records == simulate(s).records);
  }
}

TEST_CASE("generated frame events match what the simulator draws") {
  auto s = testing::random_scenario(5);
  s.policy = Policy::Collaborative;
  const auto events = generate_frame_events(s);
  const auto r = simulate(s);
  REQUIRE(events.size() == r.frames.size());
  std::map<std::string, std::uint32_t> patches_per_frame;
  for (const auto& p : r.patches)
    ++patches_per_frame[p.patch.camera_id + "/" + std::to_string(p.patch.frame_id)];
  std::map<std::string, FrameEvent> by_frame;
  for (const auto& e : events) by_frame[e.camera_id + "/" + std::to_string(e.frame_id)] = e;
  for (const auto& f : r.frames) {
    const std::string key = f.frame.camera_id + "/" + std::to_string(f.frame.frame_id);
    REQUIRE(by_frame.count(key));
    CHECK(by_frame[key].descriptor() == f.frame);
    if (!f.dropped) CHECK(by_frame[key].plates() == patches_per_frame[key]);
  }
}

TEST_CASE("the workload does not depend on the policy") {
  auto s = testing::random_scenario(8);
  std::vector<FrameDescriptor> frames[3];
  int i = 0;
  for (Policy p : {Policy::EdgeOnly, Policy::CloudOnly, Policy::Collaborative}) {
    s.policy = p;
    for (const auto& f : simulate(s).frames) frames[i].push_back(f.frame);
    ++i;
  }
  CHECK(frames[0] == frames[1]);
  CHECK(frames[1] == frames[2]);
}

TEST_CASE("edge-only never uses the network for patches") {
  auto s = load_shipped("burst_reference.json");
  s.policy = Policy::EdgeOnly;
  s.duration_us = 20'000'000;
  s.cameras[0].bursts.clear();
  const auto r = simulate(s);
  CHECK(r.counters.dispatched_neighbor == 0);
  CHECK(r.counters.dispatched_cloud == 0);
  CHECK(r.counters.probes_sent == 0);
}

TEST_CASE("a snapshot is taken at the end of the window") {
  const auto r = simulate(load_shipped("minimal.json"));
  REQUIRE(r.window_end_snapshot);
  CHECK(r.window_end_snapshot->clock == 1'000'000);
  CHECK(r.window_end_snapshot->nodes.size() == 2);
}
