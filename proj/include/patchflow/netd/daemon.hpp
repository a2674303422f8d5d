#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "patchflow/scenario.hpp"
#include "patchflow/workload.hpp"

namespace patchflow::netd {

struct DaemonConfig {
  Scenario scenario;
  std::string node_id;
  // Edge: frames to ingest (only this edge's cameras are used). Without it
  // the edge generates the scenario workload itself.
  std::optional<std::vector<FrameEvent>> replay;
  // Wall-clock seconds per simulated second; 0.1 runs ten times faster.
  double time_scale = 1.0;
  // Listen port override (0 = take it from the scenario's transport entry).
  std::optional<std::uint16_t> listen_port;
  // Finish once the node has had nothing to do for idle_grace (edges: after
  // the last frame was ingested).
  bool exit_when_idle = false;
  std::chrono::milliseconds idle_grace{2000};
  // Cloud: finish once this many records are archived.
  std::optional<std::uint64_t> expect_records;
  // Cloud: append-only JSONL log of recognition records.
  std::filesystem::path archive_path;
  std::chrono::milliseconds connect_timeout{10000};
  // Accepted connections that stay silent this long are closed.
  std::chrono::milliseconds peer_timeout{120000};
  std::function<void(const std::string&)> log;
};

// Archived recognition record as it appears in the cloud log.
struct ArchivedRecord {
  std::string patch_id;
  std::string plate_text;
  std::string processed_by;
  NodeRole role = NodeRole::Edge;
  Time completed_at = 0;
  Duration latency = 0;
};

std::string archive_line(const ArchivedRecord& r);
std::vector<ArchivedRecord> read_archive(const std::filesystem::path& path);

class Daemon {
 public:
  virtual ~Daemon() = default;

  // Binds, connects to peers and starts the worker threads.
  virtual void start() = 0;
  // Blocks until an exit condition holds or stop() is called.
  virtual void wait() = 0;
  virtual void stop() = 0;

  virtual std::uint16_t port() const = 0;
  virtual std::map<std::string, std::uint64_t> counters() const = 0;
  // Encoded bytes sent per outgoing link ("src->dst").
  virtual std::map<std::string, std::uint64_t> link_bytes() const = 0;
};

// Throws std::invalid_argument when node_id is not in the scenario.
std::unique_ptr<Daemon> make_daemon(DaemonConfig config);

}  // namespace patchflow::netd
