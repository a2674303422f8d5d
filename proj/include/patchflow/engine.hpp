#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchflow/model.hpp"
#include "patchflow/rng.hpp"
#include "patchflow/scenario.hpp"
#include "patchflow/scheduler.hpp"
#include "patchflow/workload.hpp"

namespace patchflow {

enum class EventKind : std::uint8_t {
  FrameArrival,
  ExtractionDone,
  PolicyStep,
  TransferDone,
  RecognitionDone,
  ProbeSend,
  ProbeDeliver,
  ProbeReply,
  MetricsTick,
};

std::string_view to_string(EventKind kind);

struct Event {
  Time fire_time = 0;
  std::uint64_t sequence = 0;
  EventKind kind = EventKind::MetricsTick;
  // Kind-specific references: node / peer are node indices, item indexes
  // the frame, patch, transfer or probe tables.
  std::size_t node = 0;
  std::size_t peer = 0;
  std::size_t item = 0;
};

// Per-patch latency components. They telescope: total() equals
// completed_at - capture_time exactly.
struct LatencyBreakdown {
  Duration uplink_transfer = 0;  // raw frame upload (cloud-only)
  Duration frame_wait = 0;
  Duration extraction = 0;
  Duration patch_wait = 0;
  Duration offload_transfer = 0;
  Duration remote_wait = 0;
  Duration recognition = 0;

  Duration total() const {
    return uplink_transfer + frame_wait + extraction + patch_wait + offload_transfer + remote_wait +
           recognition;
  }
};

enum class DispatchPath : std::uint8_t { None, Local, Neighbor, Cloud, CloudExtracted };

std::string_view to_string(DispatchPath path);

struct FrameTrace {
  FrameDescriptor frame;
  std::size_t edge = 0;
  bool dropped = false;
  bool extracted = false;
  Time ready_at = 0;  // arrival at the node that extracts it
  Time extraction_start = 0;
  Time extraction_end = 0;
  std::uint32_t patches = 0;
  std::uint32_t patches_done = 0;
  std::optional<Time> completed_at;  // last patch recognized
};

struct PatchTrace {
  PatchDescriptor patch;
  std::size_t frame = 0;
  // Enqueue order at the patch queue it was created in.
  std::uint64_t queue_seq = 0;
  DispatchPath path = DispatchPath::None;
  std::uint32_t dispatch_count = 0;
  Time dispatched_at = 0;
  Time arrived_at = 0;
  Time service_start = 0;
  std::optional<Time> completed_at;
  std::string executed_by;
  LatencyBreakdown latency;
};

struct LinkTraffic {
  std::uint64_t bytes = 0;          // payload + headers + control messages
  std::uint64_t payload_bytes = 0;  // frame and patch data only
  std::uint64_t messages = 0;

  bool operator==(const LinkTraffic&) const = default;
};

using Interval = std::pair<Time, Time>;

struct NodeActivity {
  std::vector<Interval> extraction_busy;
  std::vector<Interval> recognition_busy;
};

struct NodeSnapshot {
  std::string node_id;
  std::uint64_t frame_queue = 0;
  std::uint64_t patch_queue = 0;
  std::uint64_t remote_queue = 0;
  bool extraction_busy = false;
  bool recognition_busy = false;
  bool offloader_busy = false;
};

struct Snapshot {
  Time clock = 0;
  std::uint64_t events_processed = 0;
  std::uint64_t pending_events = 0;
  std::uint64_t transfers_in_flight = 0;
  std::vector<NodeSnapshot> nodes;

  nlohmann::json to_json() const;
};

struct Counters {
  std::uint64_t frames_generated = 0;
  std::uint64_t frames_extracted = 0;
  std::uint64_t frames_dropped = 0;
  std::uint64_t frames_without_plates = 0;
  std::uint64_t patches_created = 0;
  std::uint64_t recognition_records = 0;
  std::uint64_t dispatched_local = 0;
  std::uint64_t dispatched_neighbor = 0;
  std::uint64_t dispatched_cloud = 0;
  std::uint64_t results_archived = 0;
  std::uint64_t probes_sent = 0;
};

struct SimResults {
  std::vector<FrameTrace> frames;
  std::vector<PatchTrace> patches;
  std::vector<RecognitionRecord> records;  // in completion order
  std::map<std::string, LinkTraffic> link_traffic;  // "src->dst"
  std::map<std::string, NodeActivity> activity;
  Counters counters;
  std::optional<Snapshot> window_end_snapshot;
  Time end_clock = 0;
};

struct SimOptions {
  // Replaces the camera generators and extraction draws.
  std::optional<std::vector<FrameEvent>> replay;
  // Receives one tab-separated line per processed event.
  std::function<void(const std::string&)> trace;
};

// The frames and extraction outcomes a scenario produces, independent of the
// policy and of queueing. The simulator draws exactly these.
std::vector<FrameEvent> generate_frame_events(const Scenario& scenario);

class Simulation {
 public:
  explicit Simulation(Scenario scenario, SimOptions options = {});

  // Throws std::logic_error when fire_time is before the clock.
  void schedule(Event event);
  // Processes events with fire_time <= until, in (time, sequence) order.
  void run(Time until);
  // Runs until no events remain (arrivals stop at duration_us).
  void run_to_completion();

  Time clock() const { return clock_; }
  Snapshot snapshot() const;
  const SimResults& results() const { return results_; }
  const Scenario& scenario() const { return scenario_; }

  std::uint64_t patches_in_flight() const;
  std::uint64_t patches_queued() const;

 private:
  struct EventOrder {
    bool operator()(const Event& a, const Event& b) const {
      return a.fire_time != b.fire_time ? a.fire_time > b.fire_time : a.sequence > b.sequence;
    }
  };

  enum class Cargo : std::uint8_t { Patch, Frame, Result };

  struct Transfer {
    Cargo cargo = Cargo::Patch;
    std::size_t item = 0;
    std::size_t link = 0;
    std::size_t from = 0;
    std::size_t to = 0;
  };

  struct ProbeExchange {
    std::size_t from = 0;
    std::size_t to = 0;
    std::uint64_t occupancy = 0;
    std::uint64_t n_max = 0;
  };

  struct LinkState {
    LinkSpec spec;
    std::string name;
    Time busy_until = 0;
  };

  struct NodeState {
    NodeSpec spec;
    StageProfile extraction;
    StageProfile recognition;
    FrameQueue frames;
    std::deque<std::size_t> frame_items;  // frame table indices, parallel to `frames`
    EdgeState edge;
    std::deque<std::size_t> cloud_patches;  // cloud recognition FIFO
    std::optional<std::size_t> extracting;
    std::optional<std::size_t> recognizing;
    std::uint64_t next_queue_seq = 0;
    RandomStream extraction_rng;
    RandomStream recognition_rng;
    Time extraction_started = 0;
    Time recognition_started = 0;
  };

  struct CameraState {
    CameraProfile profile;
    std::size_t edge = 0;
    std::size_t camera_link = 0;
    std::uint64_t next_frame_id = 0;
    std::vector<FrameEvent> replay;  // when replaying
    std::size_t replay_pos = 0;
    RandomStream size_rng;
    RandomStream plates_rng;
  };

  void handle(const Event& e);
  void on_frame_arrival(const Event& e);
  void on_extraction_done(const Event& e);
  void on_policy_step(const Event& e);
  void on_transfer_done(const Event& e);
  void on_recognition_done(const Event& e);
  void on_probe_send(const Event& e);
  void on_probe_deliver(const Event& e);
  void on_probe_reply(const Event& e);
  void on_metrics_tick(const Event& e);

  void at(Time t, EventKind kind, std::size_t node, std::size_t peer = 0, std::size_t item = 0);
  void schedule_camera(std::size_t camera, Time t);
  void try_start_extraction(std::size_t node);
  void try_start_cloud_recognition(std::size_t node);
  void start_recognition(std::size_t node, std::size_t patch);
  Time transmit(std::size_t from, std::size_t to, Cargo cargo, std::size_t item,
                std::uint64_t wire_bytes, std::uint64_t payload_bytes);
  void complete_patch(std::size_t node, std::size_t patch);
  void admit_patches(std::size_t node, std::size_t frame, std::vector<PatchDescriptor> patches);
  bool work_outstanding() const;
  std::size_t link_index(std::size_t from, std::size_t to) const;
  std::string summarize(const Event& e) const;

  Scenario scenario_;
  SimOptions options_;
  Time clock_ = 0;
  std::uint64_t next_sequence_ = 0;
  std::uint64_t events_processed_ = 0;
  std::priority_queue<Event, std::vector<Event>, EventOrder> heap_;

  std::vector<NodeState> nodes_;
  std::vector<CameraState> cameras_;
  std::vector<LinkState> links_;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> link_by_pair_;
  std::vector<Transfer> transfers_;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> transfer_bytes_;  // wire, payload
  std::vector<ProbeExchange> probes_;
  std::uint64_t transfers_in_flight_ = 0;
  std::uint64_t patches_in_transit_ = 0;
  std::uint64_t frames_outstanding_ = 0;
  std::uint64_t arrivals_pending_ = 0;
  std::map<std::string, std::size_t> patch_index_;
  std::vector<std::vector<std::uint64_t>> replay_sizes_;  // per frame, replay only
  std::size_t cloud_ = 0;
  SimResults results_;
};

// Runs a scenario to completion (arrival window plus drain).
SimResults simulate(const Scenario& scenario, SimOptions options = {});

}  // namespace patchflow
