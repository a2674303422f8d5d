#include "patchflow/cli.hpp"

#include <atomic>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>
#include <variant>

#include "CLI11.hpp"
#include "patchflow/engine.hpp"
#include "patchflow/metrics.hpp"
#include "patchflow/netd/daemon.hpp"
#include "patchflow/rng.hpp"
#include "patchflow/scenario.hpp"

namespace patchflow::cli {

namespace fs = std::filesystem;
using nlohmann::json;

nlohmann::json RunManifest::to_json() const {
  json j = {{"scenario_path", scenario_path}, {"scenario_hash", scenario_hash}, {"seed", seed},
            {"policy", policy},               {"calibration", calibration},     {"tool_version", tool_version},
            {"output_dir", output_dir}};
  if (replay_path) j["replay_path"] = *replay_path;
  if (replay_hash) j["replay_hash"] = *replay_hash;
  return j;
}

fs::path output_dir(const std::optional<fs::path>& out, const std::string& name) {
  if (out) return *out;
  if (const char* root = std::getenv("PATCHFLOW_OUT"); root && *root) return fs::path(root) / name;
  return fs::path("runs") / name;
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// A scenario file read and validated, with the bytes it came from.
struct Loaded {
  Scenario scenario;
  std::string text;
};

// Returns an exit code on failure.
std::variant<Loaded, int> load(const fs::path& path, std::ostream& err) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const IoError&) {
    err << "cannot read " << path.string() << '\n';
    return kIoError;
  }
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    err << path.string() << ": malformed JSON: " << e.what() << '\n';
    return kDomainError;
  }
  ValidationResult v = validate_scenario(doc);
  if (!v.ok()) {
    for (const auto& e : v.errors) err << e << '\n';
    return kDomainError;
  }
  return Loaded{std::move(*v.scenario), std::move(text)};
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << content;
  if (!f) throw IoError("cannot write " + path.string());
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

std::vector<FrameEvent> load_frames(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  return read_frame_events(in);
}

struct RunOutput {
  MetricsReport report;
  SimResults results;
};

// Runs one scenario and writes metrics.csv, metrics.json, records.csv,
// manifest.json and optionally trace.tsv into dir.
RunOutput run_and_export(const Scenario& scenario, const fs::path& dir, RunManifest manifest, bool trace,
                         std::optional<std::vector<FrameEvent>> replay) {
  fs::create_directories(dir);
  std::ostringstream trace_text;
  SimOptions opts;
  opts.replay = std::move(replay);
  if (trace) opts.trace = [&](const std::string& line) { trace_text << line << '\n'; };
  RunOutput out;
  out.results = simulate(scenario, std::move(opts));
  out.report = build_report(scenario, out.results);

  manifest.output_dir = dir.string();
  write_file(dir / "metrics.csv", report_csv(out.report));
  write_file(dir / "metrics.json", dump(report_to_json(out.report)));
  std::ostringstream records;
  write_records_csv(records, out.results);
  write_file(dir / "records.csv", records.str());
  if (trace) write_file(dir / "trace.tsv", trace_text.str());
  write_file(dir / "manifest.json", dump(manifest.to_json()));
  return out;
}

RunManifest manifest_for(const fs::path& path, const Loaded& l, const Scenario& s) {
  RunManifest m;
  m.scenario_path = path.string();
  m.scenario_hash = hex64(fnv1a64(l.text));
  m.seed = s.seed;
  m.policy = std::string(to_string(s.policy));
  m.calibration = s.calibration;
  return m;
}

int report_exception(std::ostream& err, const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e)) {
    err << e.what() << '\n';
    return kIoError;
  }
  err << "error: " << e.what() << '\n';
  return kDomainError;
}

double mean_edge_recognition(const Scenario& s, const MetricsReport& r) {
  double sum = 0.0;
  int n = 0;
  for (const auto& node : s.nodes) {
    if (node.role != NodeRole::Edge) continue;
    auto it = r.per_node_utilization.find(node.node_id);
    if (it == r.per_node_utilization.end()) continue;
    sum += it->second.recognition;
    ++n;
  }
  return n ? sum / n : 0.0;
}

std::string stem_of(const fs::path& p) { return p.stem().string(); }

}  // namespace

int cmd_validate(const fs::path& scenario, std::ostream&, std::ostream& err) {
  auto l = load(scenario, err);
  if (auto* code = std::get_if<int>(&l)) return *code;
  return kOk;
}

int cmd_simulate(const SimulateOptions& o, std::ostream& out, std::ostream& err) {
  auto l = load(o.scenario, err);
  if (auto* code = std::get_if<int>(&l)) return *code;
  const Loaded& loaded = std::get<Loaded>(l);
  Scenario s = loaded.scenario;
  if (o.seed) s.seed = *o.seed;
  if (o.policy) {
    auto p = parse_policy(*o.policy);
    if (!p) {
      err << "unknown policy \"" << *o.policy << "\"\n";
      return kDomainError;
    }
    s.policy = *p;
  }
  try {
    RunManifest m = manifest_for(o.scenario, loaded, s);
    std::optional<std::vector<FrameEvent>> replay;
    if (o.replay) {
      replay = load_frames(*o.replay);
      m.replay_path = o.replay->string();
      m.replay_hash = hex64(fnv1a64(read_text_file(*o.replay)));
    }
    if (o.frames_out) {
      std::ostringstream frames;
      write_frame_events(frames, replay ? *replay : generate_frame_events(s));
      if (o.frames_out->has_parent_path()) fs::create_directories(o.frames_out->parent_path());
      write_file(*o.frames_out, frames.str());
    }
    const fs::path dir = output_dir(o.out, stem_of(o.scenario) + "-" + m.policy + "-seed" + std::to_string(s.seed));
    const RunOutput r = run_and_export(s, dir, m, o.trace, std::move(replay));
    out << "policy " << m.policy << ": throughput " << fmt(r.report.throughput_fps) << " fps, mean latency "
        << (r.report.latency ? fmt(r.report.latency->mean_us) + " us" : std::string("n/a")) << ", "
        << r.results.counters.recognition_records << " records -> " << dir.string() << '\n';
  } catch (const std::exception& e) {
    return report_exception(err, e);
  }
  return kOk;
}

int cmd_compare(const CompareOptions& o, std::ostream& out, std::ostream& err) {
  auto l = load(o.scenario, err);
  if (auto* code = std::get_if<int>(&l)) return *code;
  const Loaded& loaded = std::get<Loaded>(l);
  std::vector<Policy> policies;
  for (const auto& name : o.policies) {
    auto p = parse_policy(name);
    if (!p) {
      err << "unknown policy \"" << name << "\"\n";
      return kDomainError;
    }
    policies.push_back(*p);
  }
  try {
    Scenario base = loaded.scenario;
    if (o.seed) base.seed = *o.seed;
    const fs::path dir = output_dir(o.out, stem_of(o.scenario) + "-compare-seed" + std::to_string(base.seed));
    fs::create_directories(dir);

    struct Row {
      Policy policy;
      MetricsReport report;
      LinkTraffic uplink;
    };
    std::vector<Row> rows;
    for (Policy p : policies) {
      Scenario s = base;
      s.policy = p;
      const RunOutput r = run_and_export(s, dir / std::string(to_string(p)), manifest_for(o.scenario, loaded, s),
                                         false, std::nullopt);
      rows.push_back({p, r.report, uplink_traffic(s, r.report)});
    }

    std::ostringstream table;
    table << "policy,mean_latency_us,p95_latency_us,throughput_fps,uplink_bytes,uplink_payload_bytes,"
             "edge_utilization,cloud_utilization\n";
    for (const auto& row : rows) {
      const auto& rep = row.report;
      const auto cloud_util = rep.per_node_utilization.find(base.cloud().node_id);
      table << to_string(row.policy) << ',' << (rep.latency ? fmt(rep.latency->mean_us) : "") << ','
            << (rep.latency ? std::to_string(rep.latency->p95_us) : "") << ',' << fmt(rep.throughput_fps) << ','
            << row.uplink.bytes << ',' << row.uplink.payload_bytes << ',' << fmt(mean_edge_recognition(base, rep))
            << ',' << fmt(cloud_util == rep.per_node_utilization.end() ? 0.0 : cloud_util->second.recognition)
            << '\n';
    }

    const auto find = [&](Policy p) -> const Row* {
      for (const auto& r : rows)
        if (r.policy == p) return &r;
      return nullptr;
    };
    std::ostringstream ratios;
    ratios << "ratio,value\n";
    const Row* edge = find(Policy::EdgeOnly);
    const Row* cloud = find(Policy::CloudOnly);
    for (const auto& row : rows) {
      if (edge && &row != edge) {
        if (row.report.latency && edge->report.latency && edge->report.latency->mean_us > 0)
          ratios << "mean_latency " << to_string(row.policy) << "/edge-only,"
                 << fmt(row.report.latency->mean_us / edge->report.latency->mean_us) << '\n';
        if (edge->report.throughput_fps > 0)
          ratios << "throughput " << to_string(row.policy) << "/edge-only,"
                 << fmt(row.report.throughput_fps / edge->report.throughput_fps) << '\n';
      }
      if (cloud && &row != cloud && row.policy != Policy::EdgeOnly && cloud->uplink.payload_bytes > 0) {
        ratios << "uplink_payload " << to_string(row.policy) << "/cloud-only,"
               << fmt(static_cast<double>(row.uplink.payload_bytes) / static_cast<double>(cloud->uplink.payload_bytes))
               << '\n';
      }
    }
    write_file(dir / "compare.csv", table.str());
    write_file(dir / "ratios.csv", ratios.str());
    out << table.str() << '\n' << ratios.str();
  } catch (const std::exception& e) {
    return report_exception(err, e);
  }
  return kOk;
}

void set_by_path(json& doc, const std::string& path, const json& value) {
  json* cur = &doc;
  std::stringstream ss(path);
  std::string seg;
  std::vector<std::string> segs;
  while (std::getline(ss, seg, '.')) segs.push_back(seg);
  if (segs.empty()) throw std::invalid_argument("empty parameter path");
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const std::string& s = segs[i];
    json* next = nullptr;
    if (cur->is_object()) {
      auto it = cur->find(s);
      if (it == cur->end()) {
        // Optional numeric fields may be absent from the file.
        if (i + 1 == segs.size()) {
          (*cur)[s] = value;
          return;
        }
        throw std::invalid_argument("no field '" + s + "' in " + path);
      }
      next = &*it;
    } else if (cur->is_array()) {
      const bool numeric = !s.empty() && s.find_first_not_of("0123456789") == std::string::npos;
      if (numeric && std::stoull(s) < cur->size()) {
        next = &(*cur)[std::stoull(s)];
      } else {
        for (auto& e : *cur) {
          if (!e.is_object()) continue;
          for (const char* key : {"node_id", "camera_id"}) {
            if (e.contains(key) && e[key] == s) next = &e;
          }
          if (!next && e.contains("src") && e.contains("dst") &&
              e["src"].get<std::string>() + "->" + e["dst"].get<std::string>() == s)
            next = &e;
          if (next) break;
        }
      }
      if (!next) throw std::invalid_argument("no element '" + s + "' in " + path);
    } else {
      throw std::invalid_argument(path + " goes through a non-container");
    }
    cur = next;
  }
  if (!cur->is_number()) throw std::invalid_argument(path + " is not a numeric field");
  *cur = value;
}

int cmd_sweep(const SweepOptions& o, std::ostream& out, std::ostream& err) {
  auto l = load(o.scenario, err);
  if (auto* code = std::get_if<int>(&l)) return *code;
  const Loaded& loaded = std::get<Loaded>(l);
  if (o.values.empty()) {
    err << "no sweep values\n";
    return kDomainError;
  }
  try {
    const json raw = json::parse(loaded.text);
    const std::uint64_t seed = o.seed.value_or(loaded.scenario.seed);
    const fs::path dir = output_dir(o.out, stem_of(o.scenario) + "-sweep-" + o.param);
    fs::create_directories(dir);
    std::ostringstream summary;
    summary << "value,mean_latency_us,p95_latency_us,throughput_fps,uplink_payload_bytes,dispatched_local,"
               "dispatched_neighbor,dispatched_cloud,drops\n";
    for (const auto& text : o.values) {
      json value;
      try {
        value = json::parse(text);
      } catch (const json::exception&) {
        err << "sweep value \"" << text << "\" is not a number\n";
        return kDomainError;
      }
      if (!value.is_number()) {
        err << "sweep value \"" << text << "\" is not a number\n";
        return kDomainError;
      }
      json doc = raw;
      try {
        set_by_path(doc, o.param, value);
      } catch (const std::invalid_argument& e) {
        err << e.what() << '\n';
        return kDomainError;
      }
      ValidationResult v = validate_scenario(doc);
      if (!v.ok()) {
        err << o.param << "=" << text << ":\n";
        for (const auto& e : v.errors) err << e << '\n';
        return kDomainError;
      }
      Scenario s = *v.scenario;
      s.seed = seed;
      RunManifest m = manifest_for(o.scenario, loaded, s);
      const RunOutput r = run_and_export(s, dir / (o.param + "=" + text), m, false, std::nullopt);
      const auto& rep = r.report;
      const auto& c = r.results.counters;
      summary << text << ',' << (rep.latency ? fmt(rep.latency->mean_us) : "") << ','
              << (rep.latency ? std::to_string(rep.latency->p95_us) : "") << ',' << fmt(rep.throughput_fps) << ','
              << uplink_traffic(s, rep).payload_bytes << ',' << c.dispatched_local << ',' << c.dispatched_neighbor
              << ',' << c.dispatched_cloud << ',' << rep.drops << '\n';
    }
    write_file(dir / "summary.csv", summary.str());
    out << summary.str();
  } catch (const std::exception& e) {
    return report_exception(err, e);
  }
  return kOk;
}

namespace {

volatile std::sig_atomic_t g_signalled = 0;

void on_signal(int) { g_signalled = 1; }

}  // namespace

int cmd_daemon(const DaemonOptions& o, std::ostream& out, std::ostream& err) {
  auto l = load(o.scenario, err);
  if (auto* code = std::get_if<int>(&l)) return *code;
  const Scenario& s = std::get<Loaded>(l).scenario;
  const NodeSpec* node = s.find_node(o.node_id);
  if (!node) {
    err << "unknown node " << o.node_id << '\n';
    return kDomainError;
  }
  if (o.role) {
    auto r = parse_role(*o.role);
    if (!r || *r != node->role) {
      err << "node " << o.node_id << " is a " << to_string(node->role) << ", not " << *o.role << '\n';
      return kDomainError;
    }
  }
  try {
    netd::DaemonConfig cfg;
    cfg.scenario = s;
    cfg.node_id = o.node_id;
    if (o.replay) cfg.replay = load_frames(*o.replay);
    cfg.time_scale = o.time_scale;
    cfg.listen_port = o.port;
    cfg.exit_when_idle = o.exit_when_idle;
    cfg.idle_grace = std::chrono::milliseconds(o.idle_grace_ms);
    cfg.expect_records = o.expect_records;
    if (node->role == NodeRole::Cloud) {
      cfg.archive_path = o.archive ? *o.archive : output_dir(o.out, o.node_id) / "archive.jsonl";
      if (cfg.archive_path.has_parent_path()) fs::create_directories(cfg.archive_path.parent_path());
    }
    cfg.log = [&err](const std::string& line) { err << line << '\n'; };

    auto d = netd::make_daemon(std::move(cfg));
    g_signalled = 0;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    d->start();
    std::atomic<bool> done{false};
    std::thread watcher([&] {
      while (!done.load()) {
        if (g_signalled) {
          d->stop();
          return;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
      }
    });
    d->wait();
    done = true;
    watcher.join();
    json summary = {{"node_id", o.node_id}, {"counters", d->counters()}, {"link_bytes", d->link_bytes()}};
    out << summary.dump() << '\n';
  } catch (const std::exception& e) {
    return report_exception(err, e);
  }
  return kOk;
}

int run(int argc, char** argv) {
  CLI::App app{"Cloud-edge plate recognition simulator and runtime"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  std::string scenario;

  auto* validate = app.add_subcommand("validate", "Check a scenario file");
  validate->add_option("--scenario,scenario", scenario, "Scenario JSON")->required();

  SimulateOptions sim;
  std::string sim_scenario;
  auto* simulate_cmd = app.add_subcommand("simulate", "Run one simulation and export metrics");
  simulate_cmd->add_option("--scenario", sim_scenario)->required();
  simulate_cmd->add_option("--seed", sim.seed);
  simulate_cmd->add_option("--policy", sim.policy);
  simulate_cmd->add_option("--out", sim.out);
  simulate_cmd->add_flag("--trace", sim.trace, "Also write the event trace");
  simulate_cmd->add_option("--frames-out", sim.frames_out, "Write the frame-event file");
  simulate_cmd->add_option("--replay", sim.replay, "Replay a frame-event file");

  CompareOptions cmp;
  std::string cmp_scenario;
  auto* compare = app.add_subcommand("compare", "Run several policies on one workload");
  compare->add_option("--scenario", cmp_scenario)->required();
  compare->add_option("--policies", cmp.policies)->delimiter(',');
  compare->add_option("--seed", cmp.seed);
  compare->add_option("--out", cmp.out);

  SweepOptions sw;
  std::string sw_scenario;
  auto* sweep = app.add_subcommand("sweep", "Vary one numeric scenario field");
  sweep->add_option("--scenario", sw_scenario)->required();
  sweep->add_option("--param", sw.param)->required();
  sweep->add_option("--values", sw.values)->required()->delimiter(',');
  sweep->add_option("--seed", sw.seed);
  sweep->add_option("--out", sw.out);

  DaemonOptions dm;
  std::string dm_scenario;
  auto* daemon = app.add_subcommand("daemon", "Run one node as a live process");
  daemon->add_option("--scenario", dm_scenario)->required();
  daemon->add_option("--node-id", dm.node_id)->required();
  daemon->add_option("--role", dm.role, "Expected role; exit 1 on mismatch");
  daemon->add_option("--replay", dm.replay, "Frame-event file to ingest");
  daemon->add_option("--time-scale", dm.time_scale, "Wall seconds per simulated second");
  daemon->add_option("--port", dm.port, "Listen port override");
  daemon->add_flag("--exit-when-idle", dm.exit_when_idle);
  daemon->add_option("--idle-grace-ms", dm.idle_grace_ms);
  daemon->add_option("--expect-records", dm.expect_records, "Cloud exits after this many records");
  daemon->add_option("--archive", dm.archive, "Cloud record log (JSONL)");
  daemon->add_option("--out", dm.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kDomainError;
  }

  if (*validate) return cmd_validate(scenario, std::cout, std::cerr);
  if (*simulate_cmd) {
    sim.scenario = sim_scenario;
    return cmd_simulate(sim, std::cout, std::cerr);
  }
  if (*compare) {
    cmp.scenario = cmp_scenario;
    return cmd_compare(cmp, std::cout, std::cerr);
  }
  if (*sweep) {
    sw.scenario = sw_scenario;
    return cmd_sweep(sw, std::cout, std::cerr);
  }
  if (*daemon) {
    dm.scenario = dm_scenario;
    return cmd_daemon(dm, std::cout, std::cerr);
  }
  return kDomainError;
}

}  // namespace patchflow::cli
