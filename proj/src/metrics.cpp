#include "patchflow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace patchflow {

double round_sig6(double v) {
  if (v == 0.0 || !std::isfinite(v)) return v;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return std::strtod(buf, nullptr);
}

Duration percentile(std::span<const Duration> sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("percentile of an empty sample");
  const auto n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * n));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

double utilization(std::span<const Interval> busy, Time window_start, Time window_end) {
  if (window_end <= window_start) return 0.0;
  std::vector<Interval> sorted(busy.begin(), busy.end());
  std::sort(sorted.begin(), sorted.end());
  Duration total = 0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const auto [b, e] = sorted[i];
    if (e < b) throw std::logic_error("busy interval ends before it starts");
    if (i > 0 && sorted[i - 1].second > b) throw std::logic_error("overlapping busy intervals for one worker");
    const Time lo = std::max(b, window_start);
    const Time hi = std::min(e, window_end);
    if (hi > lo) total += hi - lo;
  }
  return static_cast<double>(total) / static_cast<double>(window_end - window_start);
}

MetricsCollector::MetricsCollector(Time window_start, Time window_end)
    : window_start_(window_start), window_end_(window_end) {}

void MetricsCollector::record_completion(const RecognitionRecord& record,
                                         const LatencyBreakdown& components, Time capture_time) {
  if (components.total() != record.end_to_end_latency)
    throw std::logic_error("latency components do not sum to the end-to-end latency of " + record.patch_id);
  if (capture_time >= window_start_ && capture_time < window_end_) samples_.push_back(record.end_to_end_latency);
  if (record.completed_at >= window_start_ && record.completed_at < window_end_) ++completions_;
}

std::optional<LatencySummary> MetricsCollector::latency() const {
  if (samples_.empty()) return std::nullopt;
  std::vector<Duration> sorted = samples_;
  std::sort(sorted.begin(), sorted.end());
  LatencySummary s;
  s.count = sorted.size();
  long double sum = 0;
  for (auto v : sorted) sum += v;
  s.mean_us = static_cast<double>(sum / sorted.size());
  s.p50_us = percentile(sorted, 50);
  s.p95_us = percentile(sorted, 95);
  s.p99_us = percentile(sorted, 99);
  s.max_us = sorted.back();
  return s;
}

double MetricsCollector::throughput_fps() const {
  if (window_end_ <= window_start_) return 0.0;
  return static_cast<double>(completions_) * 1e6 / static_cast<double>(window_end_ - window_start_);
}

std::pair<Time, Time> measurement_window(const Scenario& scenario) {
  return {scenario.duration_us / 10, scenario.duration_us};
}

MetricsReport build_report(const Scenario& scenario, const SimResults& results) {
  MetricsReport r;
  r.policy = std::string(to_string(scenario.policy));
  std::tie(r.window_start_us, r.window_end_us) = measurement_window(scenario);

  // A frame's latency is that of its last-completing patch.
  std::vector<std::optional<std::size_t>> last_patch(results.frames.size());
  for (std::size_t i = 0; i < results.patches.size(); ++i) {
    const PatchTrace& p = results.patches[i];
    if (!p.completed_at) continue;
    auto& slot = last_patch[p.frame];
    if (!slot || *results.patches[*slot].completed_at < *p.completed_at) slot = i;
  }
  MetricsCollector collector(r.window_start_us, r.window_end_us);
  for (std::size_t f = 0; f < results.frames.size(); ++f) {
    const FrameTrace& frame = results.frames[f];
    if (frame.patches == 0 || frame.patches_done != frame.patches || !last_patch[f]) continue;
    const PatchTrace& p = results.patches[*last_patch[f]];
    RecognitionRecord rec{p.patch.patch_id,
                          make_plate_text(p.patch.camera_id, p.patch.frame_id, p.patch.index),
                          p.executed_by, *p.completed_at, *p.completed_at - frame.frame.capture_time};
    collector.record_completion(rec, p.latency, frame.frame.capture_time);
  }
  r.latency = collector.latency();
  r.completions = collector.completions();
  r.throughput_fps = collector.throughput_fps();
  r.per_link_traffic = results.link_traffic;
  for (const auto& [node, act] : results.activity) {
    r.per_node_utilization[node] = {utilization(act.extraction_busy, r.window_start_us, r.window_end_us),
                                    utilization(act.recognition_busy, r.window_start_us, r.window_end_us)};
  }
  r.drops = results.counters.frames_dropped;
  const Counters& c = results.counters;
  r.counters = {{"frames_generated", c.frames_generated},
                {"frames_extracted", c.frames_extracted},
                {"frames_dropped", c.frames_dropped},
                {"frames_without_plates", c.frames_without_plates},
                {"patches_created", c.patches_created},
                {"recognition_records", c.recognition_records},
                {"dispatched_local", c.dispatched_local},
                {"dispatched_neighbor", c.dispatched_neighbor},
                {"dispatched_cloud", c.dispatched_cloud},
                {"results_archived", c.results_archived},
                {"probes_sent", c.probes_sent}};
  return r;
}

LinkTraffic uplink_traffic(const Scenario& scenario, const MetricsReport& report) {
  LinkTraffic total;
  const std::string& cloud = scenario.cloud().node_id;
  for (const auto& n : scenario.nodes) {
    if (n.role != NodeRole::Edge) continue;
    auto it = report.per_link_traffic.find(n.node_id + "->" + cloud);
    if (it == report.per_link_traffic.end()) continue;
    total.bytes += it->second.bytes;
    total.payload_bytes += it->second.payload_bytes;
    total.messages += it->second.messages;
  }
  return total;
}

nlohmann::json report_to_json(const MetricsReport& r) {
  using nlohmann::json;
  json j;
  j["policy"] = r.policy;
  j["window"] = {{"start_us", r.window_start_us}, {"end_us", r.window_end_us}};
  if (r.latency) {
    j["latency"] = {{"count", r.latency->count},
                    {"mean_us", round_sig6(r.latency->mean_us)},
                    {"p50_us", r.latency->p50_us},
                    {"p95_us", r.latency->p95_us},
                    {"p99_us", r.latency->p99_us},
                    {"max_us", r.latency->max_us}};
  } else {
    j["latency"] = {{"count", 0}};
  }
  j["throughput_fps"] = round_sig6(r.throughput_fps);
  j["completions"] = r.completions;
  j["drops"] = r.drops;
  json links = json::object();
  for (const auto& [name, t] : r.per_link_traffic)
    links[name] = {{"bytes", t.bytes}, {"payload_bytes", t.payload_bytes}, {"messages", t.messages}};
  j["per_link_traffic"] = std::move(links);
  json util = json::object();
  for (const auto& [node, u] : r.per_node_utilization)
    util[node] = {{"extraction", round_sig6(u.extraction)}, {"recognition", round_sig6(u.recognition)}};
  j["per_node_utilization"] = std::move(util);
  j["counters"] = r.counters;
  return j;
}

MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.policy = j.at("policy").get<std::string>();
  r.window_start_us = j.at("window").at("start_us").get<Time>();
  r.window_end_us = j.at("window").at("end_us").get<Time>();
  const auto& l = j.at("latency");
  if (l.at("count").get<std::uint64_t>() > 0) {
    LatencySummary s;
    s.count = l.at("count").get<std::uint64_t>();
    s.mean_us = l.at("mean_us").get<double>();
    s.p50_us = l.at("p50_us").get<Duration>();
    s.p95_us = l.at("p95_us").get<Duration>();
    s.p99_us = l.at("p99_us").get<Duration>();
    s.max_us = l.at("max_us").get<Duration>();
    r.latency = s;
  }
  r.throughput_fps = j.at("throughput_fps").get<double>();
  r.completions = j.at("completions").get<std::uint64_t>();
  r.drops = j.at("drops").get<std::uint64_t>();
  for (const auto& [name, t] : j.at("per_link_traffic").items()) {
    r.per_link_traffic[name] = {t.at("bytes").get<std::uint64_t>(), t.at("payload_bytes").get<std::uint64_t>(),
                                t.at("messages").get<std::uint64_t>()};
  }
  for (const auto& [node, u] : j.at("per_node_utilization").items())
    r.per_node_utilization[node] = {u.at("extraction").get<double>(), u.at("recognition").get<double>()};
  r.counters = j.at("counters").get<std::map<std::string, std::uint64_t>>();
  return r;
}

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void row(std::ostream& out, std::string_view metric, std::string_view scope, const std::string& value,
         std::string_view unit) {
  out << metric << ',' << scope << ',' << value << ',' << unit << '\n';
}

}  // namespace

void write_csv(std::ostream& out, const MetricsReport& r) {
  out << "metric,scope,value,unit\n";
  row(out, "window_start", "all", std::to_string(r.window_start_us), "us");
  row(out, "window_end", "all", std::to_string(r.window_end_us), "us");
  const std::uint64_t count = r.latency ? r.latency->count : 0;
  row(out, "latency_count", "all", std::to_string(count), "count");
  if (r.latency) {
    row(out, "latency_mean", "all", fmt_double(r.latency->mean_us), "us");
    row(out, "latency_p50", "all", std::to_string(r.latency->p50_us), "us");
    row(out, "latency_p95", "all", std::to_string(r.latency->p95_us), "us");
    row(out, "latency_p99", "all", std::to_string(r.latency->p99_us), "us");
    row(out, "latency_max", "all", std::to_string(r.latency->max_us), "us");
  }
  row(out, "throughput", "all", fmt_double(r.throughput_fps), "fps");
  row(out, "completions", "all", std::to_string(r.completions), "frames");
  row(out, "drops", "all", std::to_string(r.drops), "frames");
  for (const auto& [name, t] : r.per_link_traffic) {
    row(out, "traffic", name, std::to_string(t.bytes), "bytes");
    row(out, "traffic_payload", name, std::to_string(t.payload_bytes), "bytes");
    row(out, "traffic_messages", name, std::to_string(t.messages), "count");
  }
  for (const auto& [node, u] : r.per_node_utilization) {
    row(out, "utilization_extraction", node, fmt_double(u.extraction), "fraction");
    row(out, "utilization_recognition", node, fmt_double(u.recognition), "fraction");
  }
  for (const auto& [name, v] : r.counters) row(out, name, "all", std::to_string(v), "count");
}

std::string report_csv(const MetricsReport& report) {
  std::ostringstream ss;
  write_csv(ss, report);
  return ss.str();
}

void write_records_csv(std::ostream& out, const SimResults& results) {
  out << "patch_id,plate_text,processed_by,path,capture_us,completed_us,latency_us,uplink_transfer_us,"
         "frame_wait_us,extraction_us,patch_wait_us,offload_transfer_us,remote_wait_us,recognition_us\n";
  for (const auto& p : results.patches) {
    if (!p.completed_at) continue;
    const auto& l = p.latency;
    out << p.patch.patch_id << ',' << make_plate_text(p.patch.camera_id, p.patch.frame_id, p.patch.index) << ','
        << p.executed_by << ',' << to_string(p.path) << ',' << p.patch.capture_time << ',' << *p.completed_at
        << ',' << (*p.completed_at - p.patch.capture_time) << ',' << l.uplink_transfer << ',' << l.frame_wait
        << ',' << l.extraction << ',' << l.patch_wait << ',' << l.offload_transfer << ',' << l.remote_wait
        << ',' << l.recognition << '\n';
  }
}

}  // namespace patchflow
