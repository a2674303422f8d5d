#include "patchflow/engine.hpp"

#include <algorithm>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace patchflow {

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::FrameArrival: return "FrameArrival";
    case EventKind::ExtractionDone: return "ExtractionDone";
    case EventKind::PolicyStep: return "PolicyStep";
    case EventKind::TransferDone: return "TransferDone";
    case EventKind::RecognitionDone: return "RecognitionDone";
    case EventKind::ProbeSend: return "ProbeSend";
    case EventKind::ProbeDeliver: return "ProbeDeliver";
    case EventKind::ProbeReply: return "ProbeReply";
    case EventKind::MetricsTick: return "MetricsTick";
  }
  return "?";
}

std::string_view to_string(DispatchPath path) {
  switch (path) {
    case DispatchPath::None: return "none";
    case DispatchPath::Local: return "local";
    case DispatchPath::Neighbor: return "neighbor";
    case DispatchPath::Cloud: return "cloud";
    case DispatchPath::CloudExtracted: return "cloud-extracted";
  }
  return "?";
}

nlohmann::json Snapshot::to_json() const {
  nlohmann::json j = {{"clock", clock},
                      {"events_processed", events_processed},
                      {"pending_events", pending_events},
                      {"transfers_in_flight", transfers_in_flight}};
  nlohmann::json ns = nlohmann::json::array();
  for (const auto& n : nodes) {
    ns.push_back({{"node_id", n.node_id},
                  {"frame_queue", n.frame_queue},
                  {"patch_queue", n.patch_queue},
                  {"remote_queue", n.remote_queue},
                  {"extraction_busy", n.extraction_busy},
                  {"recognition_busy", n.recognition_busy},
                  {"offloader_busy", n.offloader_busy}});
  }
  j["nodes"] = std::move(ns);
  return j;
}

namespace {

RandomStream frame_size_stream(const Scenario& s, const CameraProfile& c) {
  return RandomStream(s.seed, c.camera_id, "frame_size");
}

RandomStream plates_stream(const Scenario& s, const CameraProfile& c) {
  return RandomStream(s.seed, c.camera_id, "plates");
}

}  // namespace

std::vector<FrameEvent> generate_frame_events(const Scenario& scenario) {
  std::vector<FrameEvent> events;
  for (const auto& cam : scenario.cameras) {
    const StageProfile profile = extraction_profile(scenario, scenario.camera_edge(cam.camera_id));
    const RandomStream sizes = frame_size_stream(scenario, cam);
    const RandomStream plates = plates_stream(scenario, cam);
    Time t = 0;
    for (std::uint64_t f = 0; t < scenario.duration_us; ++f) {
      RandomStream size_rng = sizes.substream(f);
      const FrameArrival arrival = next_frame(cam, f, t, size_rng);
      RandomStream plate_rng = plates.substream(f);
      FrameEvent e;
      e.camera_id = cam.camera_id;
      e.frame_id = f;
      e.time_us = t;
      e.size_bytes = arrival.frame.size_bytes;
      for (const auto& p : extract_outcome(arrival.frame, profile, plate_rng, t, ""))
        e.patch_sizes.push_back(p.size_bytes);
      events.push_back(std::move(e));
      t = arrival.next_arrival;
    }
  }
  std::stable_sort(events.begin(), events.end(), [](const FrameEvent& a, const FrameEvent& b) {
    if (a.time_us != b.time_us) return a.time_us < b.time_us;
    if (a.camera_id != b.camera_id) return a.camera_id < b.camera_id;
    return a.frame_id < b.frame_id;
  });
  return events;
}

Simulation::Simulation(Scenario scenario, SimOptions options)
    : scenario_(std::move(scenario)), options_(std::move(options)) {
  if (auto errors = check_scenario(scenario_); !errors.empty())
    throw std::invalid_argument("invalid scenario: " + errors.front());

  std::map<std::string, std::size_t> node_index;
  for (const auto& spec : scenario_.nodes) {
    const bool is_cloud = spec.role == NodeRole::Cloud;
    NodeState n{spec,
                is_cloud ? resolve_profile(scenario_, std::nullopt) : extraction_profile(scenario_, spec),
                recognition_profile(scenario_, spec),
                FrameQueue(spec.frame_queue_capacity),
                {},
                EdgeState(spec, scenario_.experiment.recognizes_locally(spec.node_id)),
                {},
                std::nullopt,
                std::nullopt,
                0,
                RandomStream(scenario_.seed, spec.node_id, "extraction"),
                RandomStream(scenario_.seed, spec.node_id, "recognition"),
                0,
                0};
    if (is_cloud) cloud_ = nodes_.size();
    node_index[spec.node_id] = nodes_.size();
    nodes_.push_back(std::move(n));
    results_.activity[spec.node_id];
  }

  for (const auto& l : scenario_.links) {
    const std::size_t idx = links_.size();
    links_.push_back({l, l.src + "->" + l.dst, 0});
    results_.link_traffic[links_.back().name];
    auto s = node_index.find(l.src);
    auto d = node_index.find(l.dst);
    if (s != node_index.end() && d != node_index.end()) link_by_pair_[{s->second, d->second}] = idx;
  }

  std::map<std::string, std::vector<FrameEvent>> replay_by_camera;
  if (options_.replay) {
    for (const auto& e : *options_.replay) replay_by_camera[e.camera_id].push_back(e);
    for (const auto& [id, _] : replay_by_camera) {
      if (std::none_of(scenario_.cameras.begin(), scenario_.cameras.end(),
                       [&](const CameraProfile& c) { return c.camera_id == id; }))
        throw std::invalid_argument("replay references undeclared camera " + id);
    }
  }

  for (const auto& cam : scenario_.cameras) {
    CameraState c{cam,
                  node_index.at(scenario_.camera_edge(cam.camera_id).node_id),
                  0,
                  0,
                  {},
                  0,
                  frame_size_stream(scenario_, cam),
                  plates_stream(scenario_, cam)};
    for (std::size_t i = 0; i < links_.size(); ++i) {
      if (links_[i].spec.src == cam.camera_id && links_[i].spec.dst == nodes_[c.edge].spec.node_id)
        c.camera_link = i;
    }
    if (options_.replay) {
      c.replay = std::move(replay_by_camera[cam.camera_id]);
      std::stable_sort(c.replay.begin(), c.replay.end(),
                       [](const FrameEvent& a, const FrameEvent& b) { return a.time_us < b.time_us; });
    }
    cameras_.push_back(std::move(c));
  }

  for (std::size_t i = 0; i < cameras_.size(); ++i) {
    if (options_.replay) {
      if (!cameras_[i].replay.empty()) schedule_camera(i, cameras_[i].replay.front().time_us);
    } else if (scenario_.duration_us > 0) {
      schedule_camera(i, 0);
    }
  }

  if (!cameras_.empty()) {
    if (scenario_.policy == Policy::Collaborative) {
      for (std::size_t n = 0; n < nodes_.size(); ++n) {
        if (nodes_[n].spec.role == NodeRole::Edge && !nodes_[n].spec.neighbors.empty())
          at(0, EventKind::ProbeSend, n);
      }
    }
    at(scenario_.duration_us, EventKind::MetricsTick, cloud_);
  }
}

void Simulation::schedule(Event event) {
  if (event.fire_time < clock_)
    throw std::logic_error("event scheduled at " + std::to_string(event.fire_time) +
                           " before clock " + std::to_string(clock_));
  event.sequence = next_sequence_++;
  heap_.push(event);
}

void Simulation::at(Time t, EventKind kind, std::size_t node, std::size_t peer, std::size_t item) {
  Event e;
  e.fire_time = t;
  e.kind = kind;
  e.node = node;
  e.peer = peer;
  e.item = item;
  schedule(e);
}

void Simulation::schedule_camera(std::size_t camera, Time t) {
  ++arrivals_pending_;
  at(t, EventKind::FrameArrival, camera);
}

void Simulation::run(Time until) {
  while (!heap_.empty() && heap_.top().fire_time <= until) {
    const Event e = heap_.top();
    heap_.pop();
    if (e.fire_time < clock_) throw std::logic_error("event heap out of order");
    clock_ = e.fire_time;
    ++events_processed_;
    if (options_.trace) {
      options_.trace(std::to_string(e.fire_time) + '\t' + std::to_string(e.sequence) + '\t' +
                     std::string(to_string(e.kind)) + '\t' + summarize(e));
    }
    handle(e);
  }
  if (!heap_.empty()) clock_ = std::max(clock_, until);
  results_.end_clock = clock_;
}

void Simulation::run_to_completion() { run(std::numeric_limits<Time>::max()); }

void Simulation::handle(const Event& e) {
  switch (e.kind) {
    case EventKind::FrameArrival: return on_frame_arrival(e);
    case EventKind::ExtractionDone: return on_extraction_done(e);
    case EventKind::PolicyStep: return on_policy_step(e);
    case EventKind::TransferDone: return on_transfer_done(e);
    case EventKind::RecognitionDone: return on_recognition_done(e);
    case EventKind::ProbeSend: return on_probe_send(e);
    case EventKind::ProbeDeliver: return on_probe_deliver(e);
    case EventKind::ProbeReply: return on_probe_reply(e);
    case EventKind::MetricsTick: return on_metrics_tick(e);
  }
}

std::string Simulation::summarize(const Event& e) const {
  std::ostringstream s;
  switch (e.kind) {
    case EventKind::FrameArrival:
      s << "camera=" << cameras_[e.node].profile.camera_id;
      break;
    case EventKind::ExtractionDone:
      s << "node=" << nodes_[e.node].spec.node_id << " frame=" << results_.frames[e.item].frame.camera_id
        << '/' << results_.frames[e.item].frame.frame_id;
      break;
    case EventKind::RecognitionDone:
      s << "node=" << nodes_[e.node].spec.node_id << " patch=" << results_.patches[e.item].patch.patch_id;
      break;
    case EventKind::TransferDone: {
      const Transfer& t = transfers_[e.item];
      s << "link=" << links_[t.link].name << " cargo="
        << (t.cargo == Cargo::Patch ? "patch" : t.cargo == Cargo::Frame ? "frame" : "result");
      if (t.cargo == Cargo::Patch) s << " patch=" << results_.patches[t.item].patch.patch_id;
      break;
    }
    case EventKind::ProbeDeliver:
    case EventKind::ProbeReply:
      s << "node=" << nodes_[e.node].spec.node_id << " peer=" << nodes_[e.peer].spec.node_id;
      break;
    default:
      s << "node=" << nodes_[e.node].spec.node_id;
      break;
  }
  return s.str();
}

std::size_t Simulation::link_index(std::size_t from, std::size_t to) const {
  auto it = link_by_pair_.find({from, to});
  if (it == link_by_pair_.end())
    throw std::logic_error("no link " + nodes_[from].spec.node_id + "->" + nodes_[to].spec.node_id);
  return it->second;
}

bool Simulation::work_outstanding() const { return arrivals_pending_ > 0 || frames_outstanding_ > 0; }

void Simulation::on_frame_arrival(const Event& e) {
  CameraState& cam = cameras_[e.node];
  --arrivals_pending_;
  FrameTrace trace;
  std::optional<Time> next;
  if (options_.replay) {
    const FrameEvent& fe = cam.replay[cam.replay_pos++];
    trace.frame = fe.descriptor();
    replay_sizes_.resize(results_.frames.size() + 1);
    replay_sizes_.back() = fe.patch_sizes;
    if (cam.replay_pos < cam.replay.size()) next = cam.replay[cam.replay_pos].time_us;
  } else {
    RandomStream rng = cam.size_rng.substream(cam.next_frame_id);
    const FrameArrival arrival = next_frame(cam.profile, cam.next_frame_id, clock_, rng);
    ++cam.next_frame_id;
    trace.frame = arrival.frame;
    if (arrival.next_arrival < scenario_.duration_us) next = arrival.next_arrival;
  }
  trace.edge = cam.edge;
  trace.ready_at = clock_;
  const std::size_t idx = results_.frames.size();
  const std::uint64_t size = trace.frame.size_bytes;
  results_.frames.push_back(std::move(trace));
  ++results_.counters.frames_generated;
  ++frames_outstanding_;

  // Camera links carry the stream for accounting only; delivery is immediate.
  auto& camera_traffic = results_.link_traffic[links_[cam.camera_link].name];
  camera_traffic.bytes += size;
  camera_traffic.payload_bytes += size;
  ++camera_traffic.messages;

  if (scenario_.policy == Policy::CloudOnly) {
    transmit(cam.edge, cloud_, Cargo::Frame, idx, baseline_cloud_only_wire_bytes(results_.frames[idx].frame),
             size);
  } else {
    NodeState& edge = nodes_[cam.edge];
    if (edge.frames.push(results_.frames[idx].frame)) {
      edge.frame_items.push_back(idx);
      try_start_extraction(cam.edge);
    } else {
      results_.frames[idx].dropped = true;
      ++results_.counters.frames_dropped;
      --frames_outstanding_;
    }
  }
  if (next) {
    if (*next < clock_) throw std::invalid_argument("replay frames out of order for " + cam.profile.camera_id);
    schedule_camera(e.node, *next);
  }
}

void Simulation::try_start_extraction(std::size_t n) {
  NodeState& node = nodes_[n];
  if (node.extracting || node.frames.empty()) return;
  node.frames.pop();
  const std::size_t idx = node.frame_items.front();
  node.frame_items.pop_front();
  FrameTrace& f = results_.frames[idx];
  f.extraction_start = clock_;
  node.extracting = idx;
  node.extraction_started = clock_;
  const Duration st =
      service_time(Stage::Extraction, node.spec.role, node.extraction, scenario_.policy, node.extraction_rng);
  at(clock_ + st, EventKind::ExtractionDone, n, 0, idx);
}

void Simulation::on_extraction_done(const Event& e) {
  NodeState& node = nodes_[e.node];
  results_.activity[node.spec.node_id].extraction_busy.emplace_back(node.extraction_started, clock_);
  node.extracting.reset();
  FrameTrace& f = results_.frames[e.item];
  f.extraction_end = clock_;
  f.extracted = true;
  ++results_.counters.frames_extracted;

  std::vector<PatchDescriptor> patches;
  if (options_.replay) {
    patches = make_patches(f.frame, replay_sizes_[e.item], clock_, node.spec.node_id);
  } else {
    // Plate yield belongs to the frame and the edge's algorithm group, even
    // when the cloud extracts it.
    const CameraState& cam = *std::find_if(cameras_.begin(), cameras_.end(), [&](const CameraState& c) {
      return c.profile.camera_id == f.frame.camera_id;
    });
    RandomStream rng = cam.plates_rng.substream(f.frame.frame_id);
    patches = extract_outcome(f.frame, nodes_[cam.edge].extraction, rng, clock_, node.spec.node_id);
  }
  f.patches = static_cast<std::uint32_t>(patches.size());
  if (patches.empty()) {
    ++results_.counters.frames_without_plates;
    f.completed_at = clock_;
    --frames_outstanding_;
  } else {
    admit_patches(e.node, e.item, std::move(patches));
  }
  try_start_extraction(e.node);
}

void Simulation::admit_patches(std::size_t n, std::size_t frame, std::vector<PatchDescriptor> patches) {
  NodeState& node = nodes_[n];
  for (auto& p : patches) {
    PatchTrace t;
    t.patch = p;
    t.frame = frame;
    t.queue_seq = node.next_queue_seq++;
    const std::size_t idx = results_.patches.size();
    patch_index_[p.patch_id] = idx;
    ++results_.counters.patches_created;
    if (node.spec.role == NodeRole::Edge) {
      results_.patches.push_back(std::move(t));
      append_patch(node.edge.queue, std::move(p));
    } else {
      t.path = DispatchPath::CloudExtracted;
      t.dispatch_count = 1;
      t.dispatched_at = clock_;
      t.arrived_at = clock_;
      results_.patches.push_back(std::move(t));
      node.cloud_patches.push_back(idx);
    }
  }
  if (node.spec.role == NodeRole::Edge) at(clock_, EventKind::PolicyStep, n);
  else try_start_cloud_recognition(n);
}

void Simulation::on_policy_step(const Event& e) {
  NodeState& node = nodes_[e.node];
  if (node.spec.role != NodeRole::Edge) return;
  auto actions =
      run_policy_step(node.edge, scenario_.policy, clock_, 2 * scenario_.probe_period_us);
  for (auto& a : actions) {
    const std::size_t idx = patch_index_.at(a.patch.patch_id);
    PatchTrace& t = results_.patches[idx];
    switch (a.kind) {
      case DispatchAction::Kind::Local:
        if (!a.from_remote) {
          t.path = DispatchPath::Local;
          t.dispatched_at = clock_;
          t.arrived_at = clock_;
          ++t.dispatch_count;
          ++results_.counters.dispatched_local;
        }
        start_recognition(e.node, idx);
        break;
      case DispatchAction::Kind::OffloadNeighbor:
      case DispatchAction::Kind::OffloadCloud: {
        const bool to_neighbor = a.kind == DispatchAction::Kind::OffloadNeighbor;
        std::size_t target = cloud_;
        if (to_neighbor) {
          target = static_cast<std::size_t>(
              std::find_if(nodes_.begin(), nodes_.end(),
                           [&](const NodeState& s) { return s.spec.node_id == a.target; }) -
              nodes_.begin());
        }
        t.path = to_neighbor ? DispatchPath::Neighbor : DispatchPath::Cloud;
        t.dispatched_at = clock_;
        ++t.dispatch_count;
        t.patch.hops.push_back(nodes_[target].spec.node_id);
        ++(to_neighbor ? results_.counters.dispatched_neighbor : results_.counters.dispatched_cloud);
        ++patches_in_transit_;
        transmit(e.node, target, Cargo::Patch, idx, t.patch.size_bytes + kPatchHeaderBytes,
                 t.patch.size_bytes);
        break;
      }
    }
  }
  if (!actions.empty()) at(clock_, EventKind::PolicyStep, e.node);
}

void Simulation::start_recognition(std::size_t n, std::size_t patch) {
  NodeState& node = nodes_[n];
  node.recognizing = patch;
  node.recognition_started = clock_;
  results_.patches[patch].service_start = clock_;
  const Duration st =
      service_time(Stage::Recognition, node.spec.role, node.recognition, scenario_.policy, node.recognition_rng);
  at(clock_ + st, EventKind::RecognitionDone, n, 0, patch);
}

void Simulation::try_start_cloud_recognition(std::size_t n) {
  NodeState& node = nodes_[n];
  if (node.recognizing || node.cloud_patches.empty()) return;
  const std::size_t idx = node.cloud_patches.front();
  node.cloud_patches.pop_front();
  start_recognition(n, idx);
}

Time Simulation::transmit(std::size_t from, std::size_t to, Cargo cargo, std::size_t item,
                          std::uint64_t wire_bytes, std::uint64_t payload_bytes) {
  const std::size_t l = link_index(from, to);
  LinkState& link = links_[l];
  const Time start = std::max(clock_, link.busy_until);
  const Duration ser = serialization_time(link.spec, wire_bytes);
  link.busy_until = start + ser;
  const Time arrival = start + ser + link.spec.propagation_delay_us;
  const std::size_t idx = transfers_.size();
  transfers_.push_back({cargo, item, l, from, to});
  // Traffic is booked on delivery, keyed by the transfer record.
  transfer_bytes_.push_back({wire_bytes, payload_bytes});
  ++transfers_in_flight_;
  at(arrival, EventKind::TransferDone, to, from, idx);
  return arrival;
}

void Simulation::on_transfer_done(const Event& e) {
  const Transfer t = transfers_[e.item];
  --transfers_in_flight_;
  auto& traffic = results_.link_traffic[links_[t.link].name];
  traffic.bytes += transfer_bytes_[e.item].first;
  traffic.payload_bytes += transfer_bytes_[e.item].second;
  ++traffic.messages;

  switch (t.cargo) {
    case Cargo::Patch: {
      --patches_in_transit_;
      PatchTrace& p = results_.patches[t.item];
      p.arrived_at = clock_;
      nodes_[t.from].edge.offloader_busy = false;
      at(clock_, EventKind::PolicyStep, t.from);
      NodeState& target = nodes_[t.to];
      if (target.spec.role == NodeRole::Cloud) {
        target.cloud_patches.push_back(t.item);
        try_start_cloud_recognition(t.to);
      } else {
        target.edge.remote.push_back(p.patch);
        at(clock_, EventKind::PolicyStep, t.to);
      }
      break;
    }
    case Cargo::Frame: {
      FrameTrace& f = results_.frames[t.item];
      f.ready_at = clock_;
      NodeState& cloud = nodes_[t.to];
      if (cloud.frames.push(f.frame)) {
        cloud.frame_items.push_back(t.item);
        try_start_extraction(t.to);
      } else {
        f.dropped = true;
        ++results_.counters.frames_dropped;
        --frames_outstanding_;
      }
      break;
    }
    case Cargo::Result:
      ++results_.counters.results_archived;
      break;
  }
}

void Simulation::on_recognition_done(const Event& e) {
  NodeState& node = nodes_[e.node];
  results_.activity[node.spec.node_id].recognition_busy.emplace_back(node.recognition_started, clock_);
  node.recognizing.reset();
  complete_patch(e.node, e.item);
  if (node.spec.role == NodeRole::Edge) {
    node.edge.worker_busy = false;
    transmit(e.node, cloud_, Cargo::Result, e.item, kResultMessageBytes, 0);
    at(clock_, EventKind::PolicyStep, e.node);
  } else {
    try_start_cloud_recognition(e.node);
  }
}

void Simulation::complete_patch(std::size_t n, std::size_t idx) {
  PatchTrace& t = results_.patches[idx];
  FrameTrace& f = results_.frames[t.frame];
  t.completed_at = clock_;
  t.executed_by = nodes_[n].spec.node_id;
  const Time capture = f.frame.capture_time;
  LatencyBreakdown& l = t.latency;
  l.uplink_transfer = f.ready_at - capture;
  l.frame_wait = f.extraction_start - f.ready_at;
  l.extraction = f.extraction_end - f.extraction_start;
  l.patch_wait = t.dispatched_at - f.extraction_end;
  l.offload_transfer = t.arrived_at - t.dispatched_at;
  l.remote_wait = t.service_start - t.arrived_at;
  l.recognition = clock_ - t.service_start;

  results_.records.push_back({t.patch.patch_id,
                              make_plate_text(t.patch.camera_id, t.patch.frame_id, t.patch.index),
                              t.executed_by, clock_, clock_ - capture});
  ++results_.counters.recognition_records;
  if (++f.patches_done == f.patches) {
    f.completed_at = clock_;
    --frames_outstanding_;
  }
}

void Simulation::on_probe_send(const Event& e) {
  const NodeState& node = nodes_[e.node];
  for (const auto& msg : probe_round(node.spec, clock_)) {
    const auto it = std::find_if(nodes_.begin(), nodes_.end(),
                                 [&](const NodeState& s) { return s.spec.node_id == msg.to; });
    const std::size_t to = static_cast<std::size_t>(it - nodes_.begin());
    const std::size_t idx = probes_.size();
    probes_.push_back({e.node, to, 0, 0});
    ++results_.counters.probes_sent;
    at(clock_ + links_[link_index(e.node, to)].spec.propagation_delay_us, EventKind::ProbeDeliver, to,
       e.node, idx);
  }
  if (work_outstanding()) at(clock_ + scenario_.probe_period_us, EventKind::ProbeSend, e.node);
}

void Simulation::on_probe_deliver(const Event& e) {
  ProbeExchange& p = probes_[e.item];
  const NodeState& responder = nodes_[e.node];
  p.occupancy = responder.edge.reported_occupancy();
  p.n_max = responder.spec.patch_soft_threshold;
  at(clock_ + links_[link_index(e.node, e.peer)].spec.propagation_delay_us, EventKind::ProbeReply, e.peer,
     e.node, e.item);
}

void Simulation::on_probe_reply(const Event& e) {
  const ProbeExchange& p = probes_[e.item];
  nodes_[e.node].edge.view.record_reply(nodes_[e.peer].spec.node_id, p.occupancy, p.n_max, clock_);
  at(clock_, EventKind::PolicyStep, e.node);
}

void Simulation::on_metrics_tick(const Event&) { results_.window_end_snapshot = snapshot(); }

Snapshot Simulation::snapshot() const {
  Snapshot s;
  s.clock = clock_;
  s.events_processed = events_processed_;
  s.pending_events = heap_.size();
  s.transfers_in_flight = transfers_in_flight_;
  for (const auto& n : nodes_) {
    NodeSnapshot ns;
    ns.node_id = n.spec.node_id;
    ns.frame_queue = n.frames.size();
    ns.patch_queue = n.spec.role == NodeRole::Edge ? n.edge.queue.occupancy() : n.cloud_patches.size();
    ns.remote_queue = n.edge.remote.size();
    ns.extraction_busy = n.extracting.has_value();
    ns.recognition_busy = n.recognizing.has_value();
    ns.offloader_busy = n.edge.offloader_busy;
    s.nodes.push_back(std::move(ns));
  }
  return s;
}

std::uint64_t Simulation::patches_in_flight() const {
  std::uint64_t in_service = 0;
  for (const auto& n : nodes_) in_service += n.recognizing ? 1 : 0;
  return patches_in_transit_ + in_service;
}

std::uint64_t Simulation::patches_queued() const {
  std::uint64_t q = 0;
  for (const auto& n : nodes_) q += n.edge.queue.occupancy() + n.edge.remote.size() + n.cloud_patches.size();
  return q;
}

SimResults simulate(const Scenario& scenario, SimOptions options) {
  Simulation sim(scenario, std::move(options));
  sim.run_to_completion();
  return sim.results();
}

}  // namespace patchflow
