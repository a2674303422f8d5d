#include "patchflow/scheduler.hpp"

#include <stdexcept>

namespace patchflow {

bool FrameQueue::push(FrameDescriptor frame) {
  if (capacity_ && frames_.size() >= *capacity_) {
    ++drops_;
    return false;
  }
  frames_.push_back(std::move(frame));
  return true;
}

FrameDescriptor FrameQueue::pop() {
  if (frames_.empty()) throw std::logic_error("pop from empty frame queue");
  FrameDescriptor f = std::move(frames_.front());
  frames_.pop_front();
  return f;
}

PatchDescriptor PatchQueue::pop_head() {
  if (patches_.empty()) throw std::logic_error("pop from empty patch queue");
  PatchDescriptor p = std::move(patches_.front());
  patches_.pop_front();
  return p;
}

void append_patch(PatchQueue& queue, PatchDescriptor patch) { queue.append(std::move(patch)); }

AvailabilityView::AvailabilityView(std::span<const std::string> neighbors) {
  for (const auto& n : neighbors) entries_.emplace(n, NeighborStatus{});
}

bool AvailabilityView::record_reply(const std::string& node, std::uint64_t occupancy,
                                    std::uint64_t n_max, Time at) {
  auto it = entries_.find(node);
  if (it == entries_.end()) return false;
  it->second = {occupancy < n_max, occupancy, n_max, at};
  return true;
}

void AvailabilityView::mark_unreachable(const std::string& node, Time at) {
  auto it = entries_.find(node);
  if (it == entries_.end()) return;
  it->second.available = false;
  it->second.reported_at = at;
}

void AvailabilityView::note_dispatch(const std::string& node) {
  auto it = entries_.find(node);
  if (it == entries_.end()) return;
  auto& s = it->second;
  ++s.occupancy;
  s.available = s.available && s.occupancy < s.n_max;
}

bool AvailabilityView::set(const std::string& node, NeighborStatus status) {
  auto it = entries_.find(node);
  if (it == entries_.end()) return false;
  it->second = status;
  return true;
}

AvailabilityView AvailabilityView::aged(Time now, Duration stale_after) const {
  AvailabilityView copy = *this;
  for (auto& [_, s] : copy.entries_) {
    if (!s.reported_at || (now > *s.reported_at && now - *s.reported_at > stale_after))
      s.available = false;
  }
  return copy;
}

const NeighborStatus* AvailabilityView::find(const std::string& node) const {
  auto it = entries_.find(node);
  return it == entries_.end() ? nullptr : &it->second;
}

std::string to_string(const Decision& d) {
  switch (d.kind) {
    case Decision::Kind::Idle:
      return "Idle";
    case Decision::Kind::LocalRecognize:
      return "LocalRecognize";
    case Decision::Kind::OffloadNeighbor:
      return "OffloadNeighbor(" + d.target + ")";
    case Decision::Kind::OffloadCloud:
      return "OffloadCloud";
  }
  return "?";
}

std::optional<std::string> select_neighbor(const AvailabilityView& view) {
  const std::string* best = nullptr;
  std::uint64_t best_occupancy = 0;
  // entries() iterates in ascending id order, so strict < keeps the smallest id on ties.
  for (const auto& [id, s] : view.entries()) {
    if (!s.available) continue;
    if (!best || s.occupancy < best_occupancy) {
      best = &id;
      best_occupancy = s.occupancy;
    }
  }
  if (!best) return std::nullopt;
  return *best;
}

Decision decide(std::uint64_t occupancy, std::uint64_t n_max, bool local_worker_idle,
                const AvailabilityView& view) {
  if (occupancy == 0) return Decision::idle();
  if (occupancy <= n_max) return Decision::local();
  if (local_worker_idle) return Decision::local();
  if (auto n = select_neighbor(view)) return Decision::neighbor(*n);
  return Decision::cloud();
}

std::vector<ProbeMessage> probe_round(const NodeSpec& node, Time now) {
  std::vector<ProbeMessage> out;
  out.reserve(node.neighbors.size());
  for (const auto& n : node.neighbors) out.push_back({node.node_id, n, now});
  return out;
}

EdgeState::EdgeState(const NodeSpec& spec, bool local)
    : node_id(spec.node_id),
      queue(spec.patch_soft_threshold),
      local_recognition(local),
      view(spec.neighbors) {}

namespace {

DispatchAction local_action(PatchDescriptor p, bool from_remote) {
  DispatchAction a;
  a.kind = DispatchAction::Kind::Local;
  a.patch = std::move(p);
  a.from_remote = from_remote;
  return a;
}

// The worker falls back to neighbor-offloaded work once its own queue gives
// it nothing to do.
void serve_remote(EdgeState& s, std::vector<DispatchAction>& out) {
  if (s.worker_busy || s.remote.empty()) return;
  if (s.local_recognition && !s.queue.empty()) return;
  PatchDescriptor p = std::move(s.remote.front());
  s.remote.pop_front();
  s.worker_busy = true;
  out.push_back(local_action(std::move(p), true));
}

}  // namespace

std::vector<DispatchAction> baseline_edge_only(EdgeState& s) {
  std::vector<DispatchAction> out;
  if (!s.worker_busy && !s.queue.empty()) {
    s.worker_busy = true;
    out.push_back(local_action(s.queue.pop_head(), false));
  }
  serve_remote(s, out);
  return out;
}

std::vector<DispatchAction> run_policy_step(EdgeState& s, Policy policy, Time now,
                                            Duration stale_after) {
  if (policy == Policy::EdgeOnly) return baseline_edge_only(s);
  std::vector<DispatchAction> out;
  if (policy == Policy::CloudOnly) {
    // Edges extract nothing under cloud-only; only stray remote work is served.
    serve_remote(s, out);
    return out;
  }

  // With local recognition disabled every queued patch is excess.
  const std::uint64_t threshold = s.local_recognition ? s.queue.soft_threshold() : 0;
  const bool local_idle = s.local_recognition && !s.worker_busy;
  const Decision d = decide(s.queue.occupancy(), threshold, local_idle, s.view.aged(now, stale_after));

  switch (d.kind) {
    case Decision::Kind::Idle:
      break;
    case Decision::Kind::LocalRecognize:
      // Consumer 1. A busy worker means the head waits for it.
      if (local_idle) {
        s.worker_busy = true;
        out.push_back(local_action(s.queue.pop_head(), false));
      }
      break;
    case Decision::Kind::OffloadNeighbor:
    case Decision::Kind::OffloadCloud:
      // Consumer 2, active only above the threshold.
      if (!s.offloader_busy) {
        DispatchAction a;
        a.patch = s.queue.pop_head();
        if (d.kind == Decision::Kind::OffloadNeighbor) {
          a.kind = DispatchAction::Kind::OffloadNeighbor;
          a.target = d.target;
          s.view.note_dispatch(d.target);
        } else {
          a.kind = DispatchAction::Kind::OffloadCloud;
        }
        s.offloader_busy = true;
        out.push_back(std::move(a));
      }
      break;
  }
  serve_remote(s, out);
  return out;
}

std::uint64_t baseline_cloud_only_wire_bytes(const FrameDescriptor& frame) {
  return frame.size_bytes + kPatchHeaderBytes;
}

}  // namespace patchflow
