#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "patchflow/model.hpp"

namespace patchflow {

// FIFO of frames awaiting extraction. Drop-tail when full.
class FrameQueue {
 public:
  explicit FrameQueue(std::optional<std::uint64_t> capacity = std::nullopt) : capacity_(capacity) {}

  // Returns false (and counts a drop) when the queue is at capacity.
  bool push(FrameDescriptor frame);
  FrameDescriptor pop();
  const FrameDescriptor& front() const { return frames_.front(); }
  bool empty() const { return frames_.empty(); }
  std::size_t size() const { return frames_.size(); }
  std::uint64_t drops() const { return drops_; }
  std::optional<std::uint64_t> capacity() const { return capacity_; }

 private:
  std::deque<FrameDescriptor> frames_;
  std::optional<std::uint64_t> capacity_;
  std::uint64_t drops_ = 0;
};

// FIFO of extracted patches. The threshold is soft: occupancy may exceed it.
class PatchQueue {
 public:
  explicit PatchQueue(std::uint64_t soft_threshold = 1) : soft_threshold_(soft_threshold) {}

  void append(PatchDescriptor patch) { patches_.push_back(std::move(patch)); }
  PatchDescriptor pop_head();
  const PatchDescriptor& head() const { return patches_.front(); }
  std::uint64_t occupancy() const { return patches_.size(); }
  bool empty() const { return patches_.empty(); }
  std::uint64_t soft_threshold() const { return soft_threshold_; }
  bool over_threshold() const { return occupancy() > soft_threshold_; }

 private:
  std::deque<PatchDescriptor> patches_;
  std::uint64_t soft_threshold_;
};

// Appends a patch at the tail; the producer side of the queue.
void append_patch(PatchQueue& queue, PatchDescriptor patch);

struct NeighborStatus {
  bool available = false;
  std::uint64_t occupancy = 0;
  std::uint64_t n_max = 0;
  std::optional<Time> reported_at;

  bool operator==(const NeighborStatus&) const = default;
};

// What an edge believes about its neighbors' load, from probe replies.
class AvailabilityView {
 public:
  AvailabilityView() = default;
  explicit AvailabilityView(std::span<const std::string> neighbors);

  // Replies from undeclared nodes are ignored (returns false).
  bool record_reply(const std::string& node, std::uint64_t occupancy, std::uint64_t n_max, Time at);
  void mark_unreachable(const std::string& node, Time at);
  // Accounts for a patch we just sent, ahead of the next probe reply.
  void note_dispatch(const std::string& node);
  // Direct assignment for declared neighbors; false if undeclared.
  bool set(const std::string& node, NeighborStatus status);

  // Copy in which entries older than stale_after are unavailable.
  AvailabilityView aged(Time now, Duration stale_after) const;

  const std::map<std::string, NeighborStatus>& entries() const { return entries_; }
  const NeighborStatus* find(const std::string& node) const;

 private:
  std::map<std::string, NeighborStatus> entries_;
};

struct Decision {
  enum class Kind { Idle, LocalRecognize, OffloadNeighbor, OffloadCloud };

  Kind kind = Kind::Idle;
  std::string target;  // set for OffloadNeighbor

  static Decision idle() { return {Kind::Idle, {}}; }
  static Decision local() { return {Kind::LocalRecognize, {}}; }
  static Decision neighbor(std::string id) { return {Kind::OffloadNeighbor, std::move(id)}; }
  static Decision cloud() { return {Kind::OffloadCloud, {}}; }

  bool operator==(const Decision&) const = default;
};

std::string to_string(const Decision& d);

// Lowest reported occupancy among available neighbors; ties go to the
// lexicographically smallest id.
std::optional<std::string> select_neighbor(const AvailabilityView& view);

// The collaborative consumer's branch structure:
//   occupancy == 0                         -> Idle
//   0 < occupancy <= n_max                 -> LocalRecognize
//   occupancy > n_max, local worker idle   -> LocalRecognize
//   occupancy > n_max, a neighbor is free  -> OffloadNeighbor
//   otherwise                              -> OffloadCloud
Decision decide(std::uint64_t occupancy, std::uint64_t n_max, bool local_worker_idle,
                const AvailabilityView& view);

struct ProbeMessage {
  std::string from;
  std::string to;
  Time sent_at = 0;

  bool operator==(const ProbeMessage&) const = default;
};

std::vector<ProbeMessage> probe_round(const NodeSpec& node, Time now);

// Mutable scheduling state of one edge. All mutation must be serialized.
struct EdgeState {
  std::string node_id;
  PatchQueue queue;
  // Patches offloaded to us by neighbors; recognized here unconditionally.
  std::deque<PatchDescriptor> remote;
  bool worker_busy = false;
  bool offloader_busy = false;
  bool local_recognition = true;
  AvailabilityView view;

  EdgeState() = default;
  explicit EdgeState(const NodeSpec& spec, bool local_recognition = true);

  // What a probe reply reports: queued work, never work in service.
  std::uint64_t reported_occupancy() const { return queue.occupancy() + remote.size(); }
  bool idle() const { return queue.empty() && remote.empty() && !worker_busy && !offloader_busy; }
};

struct DispatchAction {
  enum class Kind { Local, OffloadNeighbor, OffloadCloud };

  Kind kind = Kind::Local;
  PatchDescriptor patch;
  std::string target;  // neighbor id for OffloadNeighbor
  bool from_remote = false;
};

// One evaluation of both consumers. The caller re-runs the step after every
// state change (and after any step that produced actions) until it is quiet.
std::vector<DispatchAction> run_policy_step(EdgeState& state, Policy policy, Time now,
                                            Duration stale_after);

// Edge-only baseline: recognize locally, never probe or offload.
std::vector<DispatchAction> baseline_edge_only(EdgeState& state);

// Cloud-only baseline: raw frames are forwarded; bytes on the uplink.
std::uint64_t baseline_cloud_only_wire_bytes(const FrameDescriptor& frame);

}  // namespace patchflow
