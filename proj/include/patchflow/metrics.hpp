#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchflow/engine.hpp"
#include "patchflow/model.hpp"

namespace patchflow {

struct LatencySummary {
  std::uint64_t count = 0;
  double mean_us = 0.0;
  Duration p50_us = 0;
  Duration p95_us = 0;
  Duration p99_us = 0;
  Duration max_us = 0;

  bool operator==(const LatencySummary&) const = default;
};

struct WorkerUtilization {
  double extraction = 0.0;
  double recognition = 0.0;

  bool operator==(const WorkerUtilization&) const = default;
};

struct MetricsReport {
  std::string policy;
  Time window_start_us = 0;
  Time window_end_us = 0;
  std::optional<LatencySummary> latency;
  double throughput_fps = 0.0;
  std::uint64_t completions = 0;
  std::map<std::string, LinkTraffic> per_link_traffic;
  std::map<std::string, WorkerUtilization> per_node_utilization;
  std::uint64_t drops = 0;
  std::map<std::string, std::uint64_t> counters;
};

// Nearest-rank percentile of an ascending sample, p in (0, 100].
Duration percentile(std::span<const Duration> sorted, double p);

// Busy time of one worker over [window_start, window_end), as a fraction.
// Intervals are clipped to the window. Overlapping intervals mean a worker
// was booked twice and throw std::logic_error.
double utilization(std::span<const Interval> busy, Time window_start, Time window_end);

// Collects frame completions over a measurement window. Latency samples are
// frames captured inside the window; throughput counts completions inside it.
class MetricsCollector {
 public:
  MetricsCollector(Time window_start, Time window_end);

  void record_completion(const RecognitionRecord& record, const LatencyBreakdown& components,
                         Time capture_time);

  std::optional<LatencySummary> latency() const;
  std::uint64_t completions() const { return completions_; }
  double throughput_fps() const;
  std::span<const Duration> samples() const { return samples_; }

 private:
  Time window_start_;
  Time window_end_;
  std::vector<Duration> samples_;
  std::uint64_t completions_ = 0;
};

// Steady-state window: the first tenth of the run is warm-up.
std::pair<Time, Time> measurement_window(const Scenario& scenario);

MetricsReport build_report(const Scenario& scenario, const SimResults& results);

// Edge-to-cloud traffic summed over every edge.
LinkTraffic uplink_traffic(const Scenario& scenario, const MetricsReport& report);

nlohmann::json report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& j);
void write_csv(std::ostream& out, const MetricsReport& report);
std::string report_csv(const MetricsReport& report);

// Per-patch raw samples with their latency decomposition.
void write_records_csv(std::ostream& out, const SimResults& results);

// Rounds to 6 significant digits.
double round_sig6(double v);

}  // namespace patchflow
