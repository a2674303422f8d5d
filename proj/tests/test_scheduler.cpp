#include <algorithm>

#include "doctest.h"
#include "patchflow/scheduler.hpp"

using namespace patchflow;

namespace {

PatchDescriptor patch(int n) {
  PatchDescriptor p;
  p.patch_id = "c1/" + std::to_string(n) + "/1";
  p.camera_id = "c1";
  p.frame_id = static_cast<std::uint64_t>(n);
  return p;
}

NodeSpec edge_spec(std::uint64_t n_max, std::vector<std::string> neighbors = {}) {
  NodeSpec s;
  s.node_id = "e1";
  s.patch_soft_threshold = n_max;
  s.neighbors = std::move(neighbors);
  return s;
}

NeighborStatus fresh(std::uint64_t occ, std::uint64_t n_max, Time at = 0) { return {occ < n_max, occ, n_max, at}; }

}  // namespace

TEST_CASE("frame queue drops at the tail when full") {
  FrameQueue q(2);
  CHECK(q.push({0, "c1", 0, 1}));
  CHECK(q.push({1, "c1", 0, 1}));
  CHECK_FALSE(q.push({2, "c1", 0, 1}));
  CHECK(q.drops() == 1);
  CHECK(q.pop().frame_id == 0);
  CHECK(q.push({3, "c1", 0, 1}));
  CHECK(q.pop().frame_id == 1);
  CHECK(q.pop().frame_id == 3);
  CHECK_THROWS_AS(q.pop(), std::logic_error);
  FrameQueue unbounded;
  for (int i = 0; i < 10'000; ++i) REQUIRE(unbounded.push({0, "c", 0, 1}));
}

TEST_CASE("patch queue is FIFO with a soft threshold") {
  PatchQueue q(1);
  append_patch(q, patch(1));
  CHECK_FALSE(q.over_threshold());
  append_patch(q, patch(2));
  CHECK(q.over_threshold());
  CHECK(q.occupancy() == 2);
  CHECK(q.pop_head().frame_id == 1);
  CHECK(q.head().frame_id == 2);
}

TEST_CASE("decide follows the dispatcher's branches") {
  AvailabilityView none;
  const std::vector<std::string> ids{"e2", "e3"};
  AvailabilityView busy(ids);
  busy.set("e2", fresh(9, 5));
  AvailabilityView one(ids);
  one.set("e3", fresh(1, 5));

  CHECK(decide(0, 5, true, one) == Decision::idle());
  CHECK(decide(0, 5, false, one) == Decision::idle());
  CHECK(decide(3, 5, false, one) == Decision::local());
  CHECK(decide(5, 5, false, none) == Decision::local());
  CHECK(decide(6, 5, true, one) == Decision::local());
  CHECK(decide(6, 5, false, one) == Decision::neighbor("e3"));
  CHECK(decide(6, 5, false, busy) == Decision::cloud());
  CHECK(decide(6, 5, false, none) == Decision::cloud());
}

TEST_CASE("select_neighbor agrees with a brute-force oracle") {
  const std::vector<std::string> ids{"a", "b", "c"};
  // Every combination of availability and occupancy 0..3 for three neighbors.
  for (int mask = 0; mask < (1 << 3) * 64; ++mask) {
    AvailabilityView view(ids);
    std::vector<std::pair<std::uint64_t, std::string>> candidates;
    for (int i = 0; i < 3; ++i) {
      const bool avail = (mask >> i) & 1;
      const std::uint64_t occ = static_cast<std::uint64_t>((mask >> (3 + 2 * i)) & 3);
      view.set(ids[i], {avail, occ, 10, 0});
      if (avail) candidates.emplace_back(occ, ids[i]);
    }
    const auto got = select_neighbor(view);
    if (candidates.empty()) {
      REQUIRE_FALSE(got);
    } else {
      REQUIRE(got == std::min_element(candidates.begin(), candidates.end())->second);
    }
  }
}

TEST_CASE("availability goes stale") {
  const std::vector<std::string> ids{"e2"};
  AvailabilityView v(ids);
  CHECK_FALSE(v.find("e2")->available);
  CHECK(v.record_reply("e2", 1, 5, 1000));
  CHECK(v.aged(1000 + 200'000, 200'000).find("e2")->available);
  CHECK_FALSE(v.aged(1001 + 200'000, 200'000).find("e2")->available);
  CHECK_FALSE(v.record_reply("stranger", 0, 5, 0));
  CHECK(v.find("stranger") == nullptr);
}

TEST_CASE("a full neighbor is unavailable and dispatches count against it") {
  const std::vector<std::string> ids{"e2"};
  AvailabilityView v(ids);
  v.record_reply("e2", 5, 5, 0);
  CHECK_FALSE(v.find("e2")->available);
  v.record_reply("e2", 3, 5, 0);
  v.note_dispatch("e2");
  CHECK(v.find("e2")->available);
  v.note_dispatch("e2");
  CHECK_FALSE(v.find("e2")->available);
  v.mark_unreachable("e2", 10);
  CHECK_FALSE(v.find("e2")->available);
}

TEST_CASE("policy step: local until the threshold, then the idle worker, then offload") {
  EdgeState s(edge_spec(2));
  for (int i = 0; i < 4; ++i) append_patch(s.queue, patch(i));

  auto a = run_policy_step(s, Policy::Collaborative, 0, 200'000);
  REQUIRE(a.size() == 1);
  CHECK(a[0].kind == DispatchAction::Kind::Local);
  CHECK(a[0].patch.frame_id == 0);
  CHECK(s.worker_busy);

  // Occupancy 3 > 2, worker busy, no neighbors: cloud.
  a = run_policy_step(s, Policy::Collaborative, 0, 200'000);
  REQUIRE(a.size() == 1);
  CHECK(a[0].kind == DispatchAction::Kind::OffloadCloud);
  CHECK(a[0].patch.frame_id == 1);
  CHECK(s.offloader_busy);

  // Back at the threshold: the head waits for the worker.
  CHECK(run_policy_step(s, Policy::Collaborative, 0, 200'000).empty());
  s.offloader_busy = false;
  // Occupancy 2 <= 2: wait for the local worker.
  CHECK(run_policy_step(s, Policy::Collaborative, 0, 200'000).empty());
  s.worker_busy = false;
  a = run_policy_step(s, Policy::Collaborative, 0, 200'000);
  REQUIRE(a.size() == 1);
  CHECK(a[0].patch.frame_id == 2);
}

TEST_CASE("policy step prefers the least loaded neighbor") {
  EdgeState s(edge_spec(1, {"e2", "e3"}));
  s.worker_busy = true;
  s.view.record_reply("e2", 0, 5, 0);
  s.view.record_reply("e3", 0, 5, 0);
  append_patch(s.queue, patch(0));
  append_patch(s.queue, patch(1));
  auto a = run_policy_step(s, Policy::Collaborative, 10, 200'000);
  REQUIRE(a.size() == 1);
  CHECK(a[0].kind == DispatchAction::Kind::OffloadNeighbor);
  CHECK(a[0].target == "e2");
  CHECK(s.view.find("e2")->occupancy == 1);
  // Stale view: back to the cloud.
  s.offloader_busy = false;
  append_patch(s.queue, patch(2));
  a = run_policy_step(s, Policy::Collaborative, 500'000, 200'000);
  REQUIRE(a.size() == 1);
  CHECK(a[0].kind == DispatchAction::Kind::OffloadCloud);
}

TEST_CASE("disabled local recognition offloads everything") {
  NodeSpec spec = edge_spec(5);
  EdgeState s(spec, false);
  append_patch(s.queue, patch(0));
  auto a = run_policy_step(s, Policy::Collaborative, 0, 200'000);
  REQUIRE(a.size() == 1);
  CHECK(a[0].kind == DispatchAction::Kind::OffloadCloud);
}

TEST_CASE("remote work is served once the own queue is empty") {
  EdgeState s(edge_spec(5));
  s.remote.push_back(patch(9));
  append_patch(s.queue, patch(0));
  CHECK(s.reported_occupancy() == 2);
  auto a = run_policy_step(s, Policy::Collaborative, 0, 200'000);
  REQUIRE(a.size() == 1);
  CHECK_FALSE(a[0].from_remote);
  s.worker_busy = false;
  a = run_policy_step(s, Policy::Collaborative, 0, 200'000);
  REQUIRE(a.size() == 1);
  CHECK(a[0].from_remote);
  CHECK(a[0].patch.frame_id == 9);
  CHECK(s.reported_occupancy() == 0);
}

TEST_CASE("edge-only never offloads") {
  EdgeState s(edge_spec(1));
  for (int i = 0; i < 5; ++i) append_patch(s.queue, patch(i));
  auto a = run_policy_step(s, Policy::EdgeOnly, 0, 200'000);
  REQUIRE(a.size() == 1);
  CHECK(a[0].kind == DispatchAction::Kind::Local);
  CHECK(run_policy_step(s, Policy::EdgeOnly, 0, 200'000).empty());
  CHECK(s.queue.occupancy() == 4);
}

TEST_CASE("probe rounds address every neighbor") {
  const auto msgs = probe_round(edge_spec(1, {"e2", "e3"}), 77);
  REQUIRE(msgs.size() == 2);
  CHECK(msgs[0] == ProbeMessage{"e1", "e2", 77});
  CHECK(msgs[1].to == "e3");
}

TEST_CASE("cloud-only uplink bytes") {
  CHECK(baseline_cloud_only_wire_bytes({0, "c1", 0, 1'631'400}) == 1'631'464);
}
