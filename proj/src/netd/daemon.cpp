#include "patchflow/netd/daemon.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

#include "patchflow/engine.hpp"
#include "patchflow/netd/socket.hpp"
#include "patchflow/netd/wire.hpp"
#include "patchflow/scheduler.hpp"

namespace patchflow::netd {

using Clock = std::chrono::steady_clock;

std::string archive_line(const ArchivedRecord& r) {
  nlohmann::json j = {{"patch_id", r.patch_id},         {"plate_text", r.plate_text},
                      {"processed_by", r.processed_by}, {"role", to_string(r.role)},
                      {"completed_at_us", r.completed_at}, {"latency_us", r.latency}};
  return j.dump();
}

std::vector<ArchivedRecord> read_archive(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<ArchivedRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    ArchivedRecord r;
    r.patch_id = j.at("patch_id").get<std::string>();
    r.plate_text = j.at("plate_text").get<std::string>();
    r.processed_by = j.at("processed_by").get<std::string>();
    r.role = parse_role(j.at("role").get<std::string>()).value_or(NodeRole::Edge);
    r.completed_at = j.at("completed_at_us").get<Time>();
    r.latency = j.at("latency_us").get<Duration>();
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

// Listener, peer connections, clock and shutdown shared by both roles.
class NodeBase : public Daemon {
 public:
  explicit NodeBase(DaemonConfig config) : cfg_(std::move(config)) {
    spec_ = cfg_.scenario.find_node(cfg_.node_id);
    if (!spec_) throw std::invalid_argument("unknown node " + cfg_.node_id);
    if (!(cfg_.time_scale > 0.0)) throw std::invalid_argument("time scale must be positive");
  }

  ~NodeBase() override = default;

  std::uint16_t port() const override { return listener_ ? listener_->port() : 0; }

  std::map<std::string, std::uint64_t> counters() const override {
    std::lock_guard lock(mu_);
    return counters_;
  }

  std::map<std::string, std::uint64_t> link_bytes() const override {
    std::lock_guard lock(conn_mu_);
    std::map<std::string, std::uint64_t> out;
    for (const auto& [peer, conns] : sending_to_) {
      std::uint64_t total = 0;
      for (const auto& c : conns) total += c->bytes_sent();
      out[cfg_.node_id + "->" + peer] = total;
    }
    return out;
  }

  void stop() override {
    {
      std::lock_guard lock(mu_);
      if (stopping_) return;
      stopping_ = true;
    }
    cv_.notify_all();
    if (listener_) listener_->close();
    std::lock_guard lock(conn_mu_);
    for (auto& c : all_conns_) c->close();
  }

  void wait() override {
    {
      std::unique_lock lock(mu_);
      while (!stopping_) {
        if (finished_locked()) break;
        cv_.wait_for(lock, std::chrono::milliseconds(20));
      }
    }
    stop();
    join_all();
  }

 protected:
  virtual void on_message(const std::shared_ptr<Connection>& c, const std::string& peer, Message m) = 0;
  // Called with mu_ held.
  virtual bool finished_locked() = 0;

  Time now() const {
    const auto wall = std::chrono::duration<double, std::micro>(Clock::now() - epoch_).count();
    return static_cast<Time>(wall / cfg_.time_scale);
  }

  std::chrono::microseconds wall(Duration sim_us) const {
    return std::chrono::microseconds(static_cast<std::int64_t>(static_cast<double>(sim_us) * cfg_.time_scale));
  }

  // Sleeps until simulated time t. Returns false when stopping.
  bool sleep_until_sim(Time t) {
    std::unique_lock lock(mu_);
    const auto deadline = epoch_ + wall(t);
    while (!stopping_ && Clock::now() < deadline) cv_.wait_until(lock, deadline);
    return !stopping_;
  }

  bool sleep_sim(Duration d) {
    std::unique_lock lock(mu_);
    const auto deadline = Clock::now() + wall(d);
    while (!stopping_ && Clock::now() < deadline) cv_.wait_until(lock, deadline);
    return !stopping_;
  }

  void log(const std::string& line) const {
    if (cfg_.log) cfg_.log(cfg_.node_id + ": " + line);
  }

  void touch_locked() { last_activity_ = Clock::now(); }
  bool grace_passed_locked() const { return Clock::now() - last_activity_ >= cfg_.idle_grace; }

  void begin() {
    epoch_ = Clock::now();
    last_activity_ = epoch_;
    std::uint16_t port = 0;
    std::string host = "127.0.0.1";
    if (auto it = cfg_.scenario.transport.find(cfg_.node_id); it != cfg_.scenario.transport.end()) {
      port = it->second.port;
      host = it->second.host;
    }
    if (cfg_.listen_port) port = *cfg_.listen_port;
    listener_ = std::make_unique<Listener>(host, port);
    log("listening on " + host + ":" + std::to_string(listener_->port()));
    spawn([this] { accept_loop(); });
  }

  void spawn(std::function<void()> body) {
    std::lock_guard lock(threads_mu_);
    threads_.emplace_back(std::move(body));
  }

  // Connects and introduces ourselves; replies are handled like any inbound traffic.
  std::shared_ptr<Connection> connect_peer(const std::string& peer, std::chrono::milliseconds deadline) {
    auto it = cfg_.scenario.transport.find(peer);
    if (it == cfg_.scenario.transport.end()) throw std::invalid_argument("no transport address for " + peer);
    auto sock = deadline.count() > 0 ? connect_with_retry(it->second.host, it->second.port, deadline)
                                     : std::optional<Socket>(connect_tcp(it->second.host, it->second.port));
    if (!sock) return nullptr;
    auto c = std::make_shared<Connection>(std::move(*sock));
    c->send(Hello{kProtocolVersion, cfg_.node_id});
    {
      std::lock_guard lock(conn_mu_);
      all_conns_.push_back(c);
      sending_to_[peer].push_back(c);
    }
    spawn([this, c, peer] { serve(c, peer); });
    return c;
  }

  void count(const std::string& name, std::uint64_t n = 1) { counters_[name] += n; }

  // Derived destructors call this so no thread outlives the members it uses.
  void shutdown() {
    stop();
    join_all();
  }

  DaemonConfig cfg_;
  const NodeSpec* spec_ = nullptr;
  Clock::time_point epoch_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  bool stopping_ = false;
  std::map<std::string, std::uint64_t> counters_;

 private:
  void accept_loop() {
    while (auto sock = listener_->accept()) {
      auto c = std::make_shared<Connection>(std::move(*sock), cfg_.peer_timeout);
      {
        std::lock_guard lock(conn_mu_);
        all_conns_.push_back(c);
      }
      {
        std::lock_guard lock(mu_);
        if (stopping_) {
          c->close();
          break;
        }
      }
      spawn([this, c] { serve(c, std::nullopt); });
    }
  }

  void serve(std::shared_ptr<Connection> c, std::optional<std::string> peer) {
    try {
      if (!peer) {
        auto first = c->receive();
        if (!first) return;
        const auto* hello = std::get_if<Hello>(&*first);
        if (!hello) throw WireError(WireError::Kind::Malformed, "expected HELLO first");
        if (hello->version != kProtocolVersion) {
          log("closing connection from " + hello->node_id + ": protocol version " +
              std::to_string(hello->version));
          c->close();
          return;
        }
        peer = hello->node_id;
        std::lock_guard lock(conn_mu_);
        sending_to_[*peer].push_back(c);
      }
      while (auto m = c->receive()) on_message(c, *peer, std::move(*m));
    } catch (const WireError& e) {
      {
        std::lock_guard lock(mu_);
        count("protocol_errors");
      }
      log("protocol error from " + peer.value_or("?") + ": " + e.what());
    } catch (const std::exception& e) {
      bool quiet;
      {
        std::lock_guard lock(mu_);
        quiet = stopping_;
      }
      if (!quiet) log("connection to " + peer.value_or("?") + " failed: " + e.what());
    }
    c->close();
  }

  void join_all() {
    std::vector<std::thread> threads;
    while (true) {
      {
        std::lock_guard lock(threads_mu_);
        threads.swap(threads_);
      }
      if (threads.empty()) break;
      for (auto& t : threads)
        if (t.joinable()) t.join();
      threads.clear();
    }
  }

  std::unique_ptr<Listener> listener_;
  Clock::time_point last_activity_;
  mutable std::mutex conn_mu_;
  std::vector<std::shared_ptr<Connection>> all_conns_;
  std::map<std::string, std::vector<std::shared_ptr<Connection>>> sending_to_;
  std::mutex threads_mu_;
  std::vector<std::thread> threads_;
};

class EdgeNode final : public NodeBase {
 public:
  explicit EdgeNode(DaemonConfig config)
      : NodeBase(std::move(config)),
        extraction_(extraction_profile(cfg_.scenario, *spec_)),
        recognition_(recognition_profile(cfg_.scenario, *spec_)),
        edge_(*spec_, cfg_.scenario.experiment.recognizes_locally(spec_->node_id)),
        frames_(spec_->frame_queue_capacity),
        extraction_rng_(cfg_.scenario.seed, spec_->node_id, "extraction"),
        recognition_rng_(cfg_.scenario.seed, spec_->node_id, "recognition") {
    if (spec_->role != NodeRole::Edge) throw std::invalid_argument(spec_->node_id + " is not an edge");
    const auto events = cfg_.replay ? *cfg_.replay : generate_frame_events(cfg_.scenario);
    for (const auto& e : events) {
      const NodeSpec* edge = nullptr;
      try {
        edge = &cfg_.scenario.camera_edge(e.camera_id);
      } catch (const std::exception&) {
        continue;
      }
      if (edge->node_id == spec_->node_id) inputs_.push_back(e);
    }
    std::stable_sort(inputs_.begin(), inputs_.end(),
                     [](const FrameEvent& a, const FrameEvent& b) { return a.time_us < b.time_us; });
  }

  ~EdgeNode() override { shutdown(); }

  void start() override {
    begin();
    cloud_ = connect_peer(cfg_.scenario.cloud().node_id, cfg_.connect_timeout);
    if (!cloud_) throw SocketError("cloud unreachable");
    for (const auto& n : spec_->neighbors) neighbors_[n] = nullptr;
    spawn([this] { source_loop(); });
    spawn([this] { extraction_loop(); });
    spawn([this] { recognition_loop(); });
    spawn([this] { offload_loop(); });
    if (cfg_.scenario.policy == Policy::Collaborative && !spec_->neighbors.empty())
      spawn([this] { probe_loop(); });
  }

 private:
  bool finished_locked() override {
    if (!cfg_.exit_when_idle) return false;
    const bool quiet = source_done_ && frames_.empty() && !extracting_ && edge_.idle() && !local_job_ &&
                       !offload_job_;
    return quiet && grace_passed_locked();
  }

  Duration stale_after() const { return 2 * cfg_.scenario.probe_period_us; }

  // Runs the dispatcher until it has nothing more to do and hands the
  // resulting work to the recognition and offload threads.
  void pump_locked() {
    touch_locked();
    while (true) {
      auto actions = run_policy_step(edge_, cfg_.scenario.policy, now(), stale_after());
      if (actions.empty()) break;
      for (auto& a : actions) {
        if (a.kind == DispatchAction::Kind::Local) {
          if (!a.from_remote) count("dispatched_local");
          local_job_ = std::move(a.patch);
        } else {
          count(a.kind == DispatchAction::Kind::OffloadNeighbor ? "dispatched_neighbor" : "dispatched_cloud");
          offload_job_ = std::move(a);
        }
      }
    }
    cv_.notify_all();
  }

  void source_loop() {
    for (const auto& e : inputs_) {
      if (!sleep_until_sim(e.time_us)) return;
      if (cfg_.scenario.policy == Policy::CloudOnly) {
        FrameMsg m{e.descriptor(), e.patch_sizes};
        try {
          cloud_->send(m);
        } catch (const std::exception& ex) {
          log(std::string("frame upload failed: ") + ex.what());
        }
        std::lock_guard lock(mu_);
        count("frames_received");
        count("frames_forwarded");
        touch_locked();
        continue;
      }
      std::lock_guard lock(mu_);
      count("frames_received");
      if (frames_.push(e.descriptor())) {
        frame_events_.push_back(e);
      } else {
        count("frames_dropped");
      }
      touch_locked();
      cv_.notify_all();
    }
    std::lock_guard lock(mu_);
    source_done_ = true;
    touch_locked();
  }

  void extraction_loop() {
    while (true) {
      FrameEvent e;
      Duration st;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return stopping_ || !frames_.empty(); });
        if (stopping_) return;
        frames_.pop();
        e = std::move(frame_events_.front());
        frame_events_.pop_front();
        extracting_ = true;
        st = draw_service_time(extraction_.extraction_time_us, extraction_rng_);
      }
      if (!sleep_sim(st)) return;
      std::lock_guard lock(mu_);
      extracting_ = false;
      auto patches = make_patches(e.descriptor(), e.patch_sizes, now(), spec_->node_id);
      if (patches.empty()) count("frames_without_plates");
      for (auto& p : patches) {
        append_patch(edge_.queue, std::move(p));
        count("patches_created");
      }
      pump_locked();
    }
  }

  void recognition_loop() {
    while (true) {
      PatchDescriptor p;
      Duration st;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return stopping_ || local_job_.has_value(); });
        if (stopping_) return;
        p = std::move(*local_job_);
        local_job_.reset();
        st = draw_service_time(recognition_.recognition_time_edge_us, recognition_rng_);
      }
      if (!sleep_sim(st)) return;
      const Time done = now();
      ResultMsg r;
      r.record = {p.patch_id, make_plate_text(p.camera_id, p.frame_id, p.index), spec_->node_id, done,
                  done > p.capture_time ? done - p.capture_time : 0};
      r.role = NodeRole::Edge;
      try {
        cloud_->send(r);
      } catch (const std::exception& ex) {
        log(std::string("result report failed: ") + ex.what());
      }
      std::lock_guard lock(mu_);
      count("recognized");
      count("results_sent");
      edge_.worker_busy = false;
      pump_locked();
    }
  }

  void offload_loop() {
    while (true) {
      DispatchAction a;
      std::shared_ptr<Connection> target;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return stopping_ || offload_job_.has_value(); });
        if (stopping_) return;
        a = std::move(*offload_job_);
        offload_job_.reset();
        if (a.kind == DispatchAction::Kind::OffloadNeighbor) target = neighbors_[a.target];
      }
      bool sent = false;
      if (a.kind == DispatchAction::Kind::OffloadNeighbor && target) {
        PatchMsg m{a.patch};
        m.patch.hops.push_back(a.target);
        try {
          target->send(m);
          sent = true;
        } catch (const std::exception& ex) {
          log("offload to " + a.target + " failed: " + ex.what());
        }
        if (!sent) {
          std::lock_guard lock(mu_);
          edge_.view.mark_unreachable(a.target, now());
          neighbors_[a.target] = nullptr;
        }
      }
      if (!sent) {
        if (a.kind == DispatchAction::Kind::OffloadNeighbor) {
          std::lock_guard lock(mu_);
          count("offload_redirected");
        }
        PatchMsg m{a.patch};
        m.patch.hops.push_back(cfg_.scenario.cloud().node_id);
        try {
          cloud_->send(m);
        } catch (const std::exception& ex) {
          log(std::string("offload to cloud failed: ") + ex.what());
        }
      }
      std::lock_guard lock(mu_);
      edge_.offloader_busy = false;
      pump_locked();
    }
  }

  void probe_loop() {
    Time next = 0;
    while (sleep_until_sim(next)) {
      for (const auto& n : spec_->neighbors) {
        std::shared_ptr<Connection> c;
        {
          std::lock_guard lock(mu_);
          c = neighbors_[n];
        }
        if (!c) {
          try {
            c = connect_peer(n, std::chrono::milliseconds(0));
          } catch (const std::exception&) {
            c = nullptr;
          }
        }
        bool ok = false;
        if (c) {
          try {
            c->send(Probe{});
            ok = true;
          } catch (const std::exception&) {
          }
        }
        std::lock_guard lock(mu_);
        if (ok) {
          neighbors_[n] = c;
          count("probes_sent");
        } else {
          neighbors_[n] = nullptr;
          edge_.view.mark_unreachable(n, now());
        }
      }
      {
        std::lock_guard lock(mu_);
        if (source_done_ && finished_locked()) return;
      }
      next += cfg_.scenario.probe_period_us;
    }
  }

  void on_message(const std::shared_ptr<Connection>& c, const std::string& peer, Message m) override {
    if (std::holds_alternative<Probe>(m)) {
      ProbeAck ack;
      {
        std::lock_guard lock(mu_);
        ack = {edge_.reported_occupancy(), spec_->patch_soft_threshold};
        count("probes_answered");
      }
      c->send(ack);
    } else if (const auto* ack = std::get_if<ProbeAck>(&m)) {
      std::lock_guard lock(mu_);
      if (edge_.view.record_reply(peer, ack->occupancy, ack->n_max, now())) pump_locked();
    } else if (auto* patch = std::get_if<PatchMsg>(&m)) {
      std::lock_guard lock(mu_);
      edge_.remote.push_back(std::move(patch->patch));
      count("remote_received");
      pump_locked();
    } else if (std::holds_alternative<Stats>(m)) {
      c->send(Stats{spec_->node_id, counters()});
    } else {
      log("ignoring " + std::string(to_string(type_of(m))) + " from " + peer);
    }
  }

  StageProfile extraction_;
  StageProfile recognition_;
  EdgeState edge_;
  FrameQueue frames_;
  std::deque<FrameEvent> frame_events_;
  std::vector<FrameEvent> inputs_;
  std::optional<PatchDescriptor> local_job_;
  std::optional<DispatchAction> offload_job_;
  bool extracting_ = false;
  bool source_done_ = false;
  RandomStream extraction_rng_;
  RandomStream recognition_rng_;
  std::shared_ptr<Connection> cloud_;
  std::map<std::string, std::shared_ptr<Connection>> neighbors_;
};

class CloudNode final : public NodeBase {
 public:
  explicit CloudNode(DaemonConfig config)
      : NodeBase(std::move(config)),
        profile_(recognition_profile(cfg_.scenario, *spec_)),
        extraction_rng_(cfg_.scenario.seed, spec_->node_id, "extraction"),
        recognition_rng_(cfg_.scenario.seed, spec_->node_id, "recognition") {
    if (spec_->role != NodeRole::Cloud) throw std::invalid_argument(spec_->node_id + " is not the cloud");
  }

  ~CloudNode() override { shutdown(); }

  void start() override {
    if (!cfg_.archive_path.empty()) {
      archive_.open(cfg_.archive_path, std::ios::app);
      if (!archive_) throw IoError("cannot open archive " + cfg_.archive_path.string());
    }
    begin();
    spawn([this] { extraction_loop(); });
    spawn([this] { recognition_loop(); });
  }

 private:
  bool finished_locked() override {
    if (cfg_.expect_records && archived_ >= *cfg_.expect_records) return true;
    if (!cfg_.exit_when_idle) return false;
    return archived_ > 0 && frames_.empty() && patches_.empty() && !extracting_ && !recognizing_ && grace_passed_locked();
  }

  void archive_locked(const ArchivedRecord& r) {
    ++archived_;
    count("results_archived");
    if (archive_.is_open()) archive_ << archive_line(r) << '\n' << std::flush;
    touch_locked();
    cv_.notify_all();
  }

  void extraction_loop() {
    while (true) {
      FrameMsg f;
      Duration st;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return stopping_ || !frames_.empty(); });
        if (stopping_) return;
        f = std::move(frames_.front());
        frames_.pop_front();
        extracting_ = true;
        st = draw_service_time(profile_.extraction_time_cloud_us, extraction_rng_);
      }
      if (!sleep_sim(st)) return;
      std::lock_guard lock(mu_);
      extracting_ = false;
      for (auto& p : make_patches(f.frame, f.patch_sizes, now(), spec_->node_id)) {
        patches_.push_back(std::move(p));
        count("patches_created");
      }
      touch_locked();
      cv_.notify_all();
    }
  }

  void recognition_loop() {
    while (true) {
      PatchDescriptor p;
      Duration st;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return stopping_ || !patches_.empty(); });
        if (stopping_) return;
        p = std::move(patches_.front());
        patches_.pop_front();
        recognizing_ = true;
        st = draw_service_time(profile_.recognition_time_cloud_us, recognition_rng_);
      }
      if (!sleep_sim(st)) return;
      std::lock_guard lock(mu_);
      recognizing_ = false;
      const Time done = now();
      count("recognized");
      archive_locked({p.patch_id, make_plate_text(p.camera_id, p.frame_id, p.index), spec_->node_id,
                      NodeRole::Cloud, done, done > p.capture_time ? done - p.capture_time : 0});
    }
  }

  void on_message(const std::shared_ptr<Connection>& c, const std::string& peer, Message m) override {
    if (auto* patch = std::get_if<PatchMsg>(&m)) {
      std::lock_guard lock(mu_);
      patches_.push_back(std::move(patch->patch));
      count("patches_received");
      touch_locked();
      cv_.notify_all();
    } else if (auto* frame = std::get_if<FrameMsg>(&m)) {
      std::lock_guard lock(mu_);
      frames_.push_back(std::move(*frame));
      count("frames_received");
      touch_locked();
      cv_.notify_all();
    } else if (const auto* r = std::get_if<ResultMsg>(&m)) {
      std::lock_guard lock(mu_);
      archive_locked({r->record.patch_id, r->record.plate_text, r->record.processed_by, r->role,
                      r->record.completed_at, r->record.end_to_end_latency});
    } else if (std::holds_alternative<Stats>(m)) {
      c->send(Stats{spec_->node_id, counters()});
    } else if (std::holds_alternative<Probe>(m)) {
      // The cloud is always available; it reports an empty queue.
      c->send(ProbeAck{0, 0});
    } else {
      log("ignoring " + std::string(to_string(type_of(m))) + " from " + peer);
    }
  }

  StageProfile profile_;
  std::deque<FrameMsg> frames_;
  std::deque<PatchDescriptor> patches_;
  bool extracting_ = false;
  bool recognizing_ = false;
  std::uint64_t archived_ = 0;
  std::ofstream archive_;
  RandomStream extraction_rng_;
  RandomStream recognition_rng_;
};

}  // namespace

std::unique_ptr<Daemon> make_daemon(DaemonConfig config) {
  const NodeSpec* spec = config.scenario.find_node(config.node_id);
  if (!spec) throw std::invalid_argument("unknown node " + config.node_id);
  if (spec->role == NodeRole::Edge) return std::make_unique<EdgeNode>(std::move(config));
  return std::make_unique<CloudNode>(std::move(config));
}

}  // namespace patchflow::netd
