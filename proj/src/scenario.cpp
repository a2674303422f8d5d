#include "patchflow/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace patchflow {
namespace {

using nlohmann::json;

// Collects schema errors while reading a JSON document field by field.
class Reader {
 public:
  explicit Reader(std::vector<std::string>& errors) : errors_(errors) {}

  void error(const std::string& where, const std::string& what) {
    errors_.push_back(where.empty() ? what : where + ": " + what);
  }

  bool object(const json& j, const std::string& where) {
    if (j.is_object()) return true;
    error(where, "expected an object");
    return false;
  }

  void allowed_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
    for (const auto& [k, _] : j.items()) {
      if (std::none_of(keys.begin(), keys.end(), [&](const char* a) { return k == a; }))
        error(where, "unknown key '" + k + "'");
    }
  }

  const json* field(const json& j, const std::string& where, const char* key, bool required) {
    auto it = j.find(key);
    if (it == j.end()) {
      if (required) error(where, std::string("missing key '") + key + "'");
      return nullptr;
    }
    return &*it;
  }

  std::optional<std::string> string(const json& j, const std::string& where, const char* key,
                                    bool required = true) {
    const json* v = field(j, where, key, required);
    if (!v) return std::nullopt;
    if (!v->is_string()) {
      error(where, std::string("'") + key + "' must be a string");
      return std::nullopt;
    }
    return v->get<std::string>();
  }

  std::optional<std::uint64_t> uint(const json& j, const std::string& where, const char* key,
                                    bool required = true) {
    const json* v = field(j, where, key, required);
    if (!v) return std::nullopt;
    if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<std::int64_t>() >= 0)) {
      error(where, std::string("'") + key + "' must be a non-negative integer");
      return std::nullopt;
    }
    return v->get<std::uint64_t>();
  }

  std::optional<double> number(const json& j, const std::string& where, const char* key,
                               bool required = true) {
    const json* v = field(j, where, key, required);
    if (!v) return std::nullopt;
    if (!v->is_number()) {
      error(where, std::string("'") + key + "' must be a number");
      return std::nullopt;
    }
    return v->get<double>();
  }

 private:
  std::vector<std::string>& errors_;
};

json service_to_json(const ServiceTimeModel& m) { return {{"mean", m.mean_us}, {"jitter", m.jitter}}; }

void apply_service_override(Reader& r, const json& j, const std::string& where,
                            ServiceTimeModel& m) {
  if (!r.object(j, where)) return;
  r.allowed_keys(j, where, {"mean", "jitter"});
  if (auto v = r.number(j, where, "mean", false)) m.mean_us = *v;
  if (auto v = r.number(j, where, "jitter", false)) m.jitter = *v;
}

void apply_overrides(Reader& r, const json& o, StageProfile& p) {
  const std::string where = "calibration_overrides";
  if (!r.object(o, where)) return;
  r.allowed_keys(o, where,
                 {"extraction_time_us", "extraction_time_cloud_us", "recognition_time_edge_us",
                  "recognition_time_cloud_us", "plates_per_frame", "patch_size_ratio"});
  const std::pair<const char*, ServiceTimeModel*> models[] = {
      {"extraction_time_us", &p.extraction_time_us},
      {"extraction_time_cloud_us", &p.extraction_time_cloud_us},
      {"recognition_time_edge_us", &p.recognition_time_edge_us},
      {"recognition_time_cloud_us", &p.recognition_time_cloud_us}};
  for (const auto& [key, model] : models) {
    if (const json* v = r.field(o, where, key, false))
      apply_service_override(r, *v, where + "." + key, *model);
  }
  if (const json* v = r.field(o, where, "plates_per_frame", false)) {
    const std::string w = where + ".plates_per_frame";
    if (r.object(*v, w)) {
      r.allowed_keys(*v, w, {"0", "1", "2", "3"});
      p.plates_per_frame = {0, 0, 0, 0};
      for (std::size_t k = 0; k < 4; ++k) {
        if (auto q = r.number(*v, w, std::to_string(k).c_str(), false)) p.plates_per_frame[k] = *q;
      }
    }
  }
  if (auto v = r.number(o, where, "patch_size_ratio", false)) p.patch_size_ratio = *v;
}

std::optional<NodeSpec> parse_node(Reader& r, const json& j, const std::string& where) {
  if (!r.object(j, where)) return std::nullopt;
  r.allowed_keys(j, where,
                 {"node_id", "role", "extraction_profile", "recognition_profile",
                  "patch_soft_threshold", "frame_queue_capacity", "neighbors"});
  NodeSpec n;
  bool ok = true;
  if (auto v = r.string(j, where, "node_id")) n.node_id = *v; else ok = false;
  if (auto v = r.string(j, where, "role")) {
    if (auto role = parse_role(*v)) n.role = *role;
    else { r.error(where, "role must be \"edge\" or \"cloud\""); ok = false; }
  } else {
    ok = false;
  }
  if (const json* v = r.field(j, where, "extraction_profile", false); v && !v->is_null()) {
    if (v->is_string()) n.extraction_profile = v->get<std::string>();
    else r.error(where, "'extraction_profile' must be a string or null");
  }
  if (const json* v = r.field(j, where, "recognition_profile", false); v && !v->is_null()) {
    if (v->is_string()) n.recognition_profile = v->get<std::string>();
    else r.error(where, "'recognition_profile' must be a string or null");
  }
  if (auto v = r.uint(j, where, "patch_soft_threshold", n.role == NodeRole::Edge))
    n.patch_soft_threshold = *v;
  else if (n.role == NodeRole::Cloud)
    n.patch_soft_threshold = 0;
  if (const json* v = r.field(j, where, "frame_queue_capacity", false)) {
    if (v->is_null() || (v->is_string() && v->get<std::string>() == "unbounded")) {
      n.frame_queue_capacity.reset();
    } else if (v->is_number_unsigned() || (v->is_number_integer() && v->get<std::int64_t>() >= 0)) {
      n.frame_queue_capacity = v->get<std::uint64_t>();
    } else {
      r.error(where, "'frame_queue_capacity' must be a positive integer or \"unbounded\"");
    }
  }
  if (const json* v = r.field(j, where, "neighbors", false)) {
    if (v->is_array() && std::all_of(v->begin(), v->end(), [](const json& e) { return e.is_string(); }))
      n.neighbors = v->get<std::vector<std::string>>();
    else
      r.error(where, "'neighbors' must be a list of node identifiers");
  }
  if (!ok) return std::nullopt;
  return n;
}

std::optional<LinkSpec> parse_link(Reader& r, const json& j, const std::string& where) {
  if (!r.object(j, where)) return std::nullopt;
  r.allowed_keys(j, where, {"src", "dst", "bandwidth_bps", "propagation_delay_us"});
  LinkSpec l;
  auto src = r.string(j, where, "src");
  auto dst = r.string(j, where, "dst");
  auto bw = r.number(j, where, "bandwidth_bps");
  auto prop = r.uint(j, where, "propagation_delay_us", false);
  if (!src || !dst || !bw) return std::nullopt;
  l.src = *src;
  l.dst = *dst;
  l.bandwidth_bps = *bw;
  l.propagation_delay_us = prop.value_or(0);
  return l;
}

std::optional<CameraProfile> parse_camera(Reader& r, const json& j, const std::string& where) {
  if (!r.object(j, where)) return std::nullopt;
  r.allowed_keys(j, where,
                 {"camera_id", "fps", "frame_size_mean_bytes", "frame_size_jitter", "bursts"});
  CameraProfile c;
  auto id = r.string(j, where, "camera_id");
  auto fps = r.number(j, where, "fps");
  auto size = r.uint(j, where, "frame_size_mean_bytes");
  if (!id || !fps || !size) return std::nullopt;
  c.camera_id = *id;
  c.fps = *fps;
  c.frame_size_mean_bytes = *size;
  c.frame_size_jitter = r.number(j, where, "frame_size_jitter", false).value_or(0.0);
  if (const json* v = r.field(j, where, "bursts", false)) {
    if (!v->is_array()) {
      r.error(where, "'bursts' must be a list");
    } else {
      for (std::size_t i = 0; i < v->size(); ++i) {
        const std::string w = where + ".bursts[" + std::to_string(i) + "]";
        const json& b = (*v)[i];
        if (!r.object(b, w)) continue;
        r.allowed_keys(b, w, {"start_us", "end_us", "rate_multiplier"});
        auto s = r.uint(b, w, "start_us");
        auto e = r.uint(b, w, "end_us");
        auto m = r.number(b, w, "rate_multiplier");
        if (s && e && m) c.bursts.push_back({*s, *e, *m});
      }
    }
  }
  return c;
}

template <typename T, typename Fn>
std::vector<T> parse_list(Reader& r, const json& doc, const char* key, Fn parse) {
  std::vector<T> out;
  const json* v = r.field(doc, "", key, true);
  if (!v) return out;
  if (!v->is_array()) {
    r.error("", std::string("'") + key + "' must be a list");
    return out;
  }
  for (std::size_t i = 0; i < v->size(); ++i) {
    if (auto item = parse(r, (*v)[i], std::string(key) + "[" + std::to_string(i) + "]"))
      out.push_back(std::move(*item));
  }
  return out;
}

}  // namespace

bool ExperimentOptions::recognizes_locally(std::string_view node_id) const {
  return local_recognition && std::find(offload_only.begin(), offload_only.end(), node_id) == offload_only.end();
}

const NodeSpec* Scenario::find_node(std::string_view id) const {
  for (const auto& n : nodes)
    if (n.node_id == id) return &n;
  return nullptr;
}

const LinkSpec* Scenario::find_link(std::string_view src, std::string_view dst) const {
  for (const auto& l : links)
    if (l.src == src && l.dst == dst) return &l;
  return nullptr;
}

const NodeSpec& Scenario::cloud() const {
  for (const auto& n : nodes)
    if (n.role == NodeRole::Cloud) return n;
  throw std::logic_error("scenario has no cloud node");
}

const NodeSpec& Scenario::camera_edge(std::string_view camera_id) const {
  for (const auto& l : links) {
    if (l.src != camera_id) continue;
    if (const NodeSpec* n = find_node(l.dst); n && n->role == NodeRole::Edge) return *n;
  }
  throw std::logic_error("camera " + std::string(camera_id) + " has no edge link");
}

StageProfile resolve_profile(const Scenario& scenario, const std::optional<std::string>& name) {
  auto base = preset_profile(name.value_or(scenario.calibration));
  if (!base) throw std::logic_error("unknown calibration " + name.value_or(scenario.calibration));
  std::vector<std::string> errors;
  Reader r(errors);
  apply_overrides(r, scenario.calibration_overrides, *base);
  if (!errors.empty()) throw std::logic_error(errors.front());
  return *base;
}

StageProfile recognition_profile(const Scenario& scenario, const NodeSpec& node) {
  return resolve_profile(scenario, node.recognition_profile);
}

StageProfile extraction_profile(const Scenario& scenario, const NodeSpec& node) {
  return resolve_profile(scenario, node.extraction_profile);
}

std::vector<std::string> check_scenario(const Scenario& s) {
  std::vector<std::string> errors;
  auto err = [&](std::string e) { errors.push_back(std::move(e)); };

  std::set<std::string> node_ids;
  std::size_t clouds = 0;
  for (const auto& n : s.nodes) {
    if (n.node_id.empty()) err("node with empty node_id");
    if (!node_ids.insert(n.node_id).second) err("duplicate node " + n.node_id);
    if (n.role == NodeRole::Cloud) ++clouds;
  }
  if (clouds != 1) err("exactly one cloud node required");

  std::set<std::string> camera_ids;
  for (const auto& c : s.cameras) {
    if (!camera_ids.insert(c.camera_id).second) err("duplicate camera " + c.camera_id);
    if (node_ids.count(c.camera_id)) err("camera " + c.camera_id + " shares an id with a node");
  }

  const auto is_edge = [&](const std::string& id) {
    const NodeSpec* n = s.find_node(id);
    return n && n->role == NodeRole::Edge;
  };

  std::set<std::pair<std::string, std::string>> seen_links;
  for (const auto& l : s.links) {
    const std::string name = l.src + "->" + l.dst;
    if (!seen_links.insert({l.src, l.dst}).second) err("duplicate link " + name);
    if (!node_ids.count(l.src) && !camera_ids.count(l.src))
      err("unresolved link endpoint " + l.src + " on link " + name);
    if (!node_ids.count(l.dst)) {
      if (camera_ids.count(l.dst)) err("link " + name + " must end at a node, not a camera");
      else err("unresolved link endpoint " + l.dst + " on link " + name);
    }
    if (!(l.bandwidth_bps > 0.0)) err("non-positive bandwidth on link " + name);
  }

  for (const auto& n : s.nodes) {
    if (n.role == NodeRole::Cloud) {
      if (n.extraction_profile) err("cloud node " + n.node_id + " must not have an extraction_profile");
      if (!n.neighbors.empty()) err("cloud node " + n.node_id + " must not have neighbors");
      continue;
    }
    if (n.patch_soft_threshold < 1) err("edge " + n.node_id + " needs patch_soft_threshold >= 1");
    if (n.frame_queue_capacity && *n.frame_queue_capacity < 1)
      err("edge " + n.node_id + " needs frame_queue_capacity >= 1");
    std::set<std::string> seen_neighbors;
    for (const auto& nb : n.neighbors) {
      if (!seen_neighbors.insert(nb).second) err("edge " + n.node_id + " lists neighbor " + nb + " twice");
      if (!node_ids.count(nb)) {
        err("unresolved neighbor " + nb);
        continue;
      }
      if (nb == n.node_id) err("edge " + n.node_id + " lists itself as a neighbor");
      else if (!is_edge(nb)) err("neighbor " + nb + " of " + n.node_id + " is not an edge");
      if (!s.find_link(n.node_id, nb)) err("missing link " + n.node_id + "->" + nb + " for neighbor " + nb);
      if (!s.find_link(nb, n.node_id)) err("missing link " + nb + "->" + n.node_id + " for neighbor " + nb);
    }
    if (clouds == 1) {
      const std::string& cloud = s.cloud().node_id;
      if (!s.find_link(n.node_id, cloud)) err("edge " + n.node_id + " has no link to the cloud");
      if (!s.find_link(cloud, n.node_id)) err("edge " + n.node_id + " has no link from the cloud");
    }
  }

  for (const auto& c : s.cameras) {
    std::size_t edge_links = 0;
    for (const auto& l : s.links)
      if (l.src == c.camera_id && is_edge(l.dst)) ++edge_links;
    if (edge_links == 0) err("camera " + c.camera_id + " has no edge link");
    if (edge_links > 1) err("camera " + c.camera_id + " is linked to more than one edge");
    if (!(c.fps > 0.0)) err("camera " + c.camera_id + " needs fps > 0");
    if (c.frame_size_mean_bytes < 1) err("camera " + c.camera_id + " needs frame_size_mean_bytes >= 1");
    if (!(c.frame_size_jitter >= 0.0 && c.frame_size_jitter < 1.0))
      err("camera " + c.camera_id + " needs frame_size_jitter in [0,1)");
    auto bursts = c.bursts;
    std::sort(bursts.begin(), bursts.end(),
              [](const Burst& a, const Burst& b) { return a.start_us < b.start_us; });
    for (std::size_t i = 0; i < bursts.size(); ++i) {
      const auto& b = bursts[i];
      if (b.start_us >= b.end_us) err("camera " + c.camera_id + " has an empty burst interval");
      if (b.end_us > s.duration_us) err("camera " + c.camera_id + " has a burst beyond duration_us");
      if (!(b.rate_multiplier >= 1.0)) err("camera " + c.camera_id + " has a burst multiplier below 1");
      if (i > 0 && bursts[i - 1].end_us > b.start_us)
        err("camera " + c.camera_id + " has overlapping bursts");
    }
  }

  for (const auto& id : s.experiment.offload_only)
    if (!is_edge(id)) err("offload_only names " + id + ", which is not an edge");

  if (s.duration_us < 1) err("duration_us must be positive");
  if (s.probe_period_us < 1) err("probe_period_us must be positive");

  std::set<std::string> profile_names = {s.calibration};
  for (const auto& n : s.nodes) {
    if (n.extraction_profile) profile_names.insert(*n.extraction_profile);
    if (n.recognition_profile) profile_names.insert(*n.recognition_profile);
  }
  for (const auto& name : profile_names) {
    auto base = preset_profile(name);
    if (!base) {
      err("unknown calibration " + name);
      continue;
    }
    std::vector<std::string> override_errors;
    Reader r(override_errors);
    apply_overrides(r, s.calibration_overrides, *base);
    if (override_errors.empty()) override_errors = check_profile(*base);
    for (auto& e : override_errors) err("calibration " + name + ": " + e);
  }

  for (const auto& [id, ep] : s.transport) {
    if (!node_ids.count(id)) err("transport entry for undeclared node " + id);
    if (ep.port == 0) err("transport entry for " + id + " needs a port");
  }
  return errors;
}

ValidationResult validate_scenario(const Scenario& raw) {
  ValidationResult result;
  result.errors = check_scenario(raw);
  if (result.errors.empty()) result.scenario = raw;
  return result;
}

ValidationResult validate_scenario(const json& doc) {
  ValidationResult result;
  Reader r(result.errors);
  if (!r.object(doc, "scenario")) return result;
  r.allowed_keys(doc, "",
                 {"nodes", "links", "cameras", "policy", "calibration", "calibration_overrides",
                  "seed", "duration_us", "probe_period_us", "description", "experiment",
                  "transport"});
  Scenario s;
  s.nodes = parse_list<NodeSpec>(r, doc, "nodes", parse_node);
  s.links = parse_list<LinkSpec>(r, doc, "links", parse_link);
  s.cameras = parse_list<CameraProfile>(r, doc, "cameras", parse_camera);
  if (auto v = r.string(doc, "", "policy")) {
    if (auto p = parse_policy(*v)) s.policy = *p;
    else r.error("", "unknown policy \"" + *v + "\"");
  }
  if (auto v = r.string(doc, "", "calibration")) s.calibration = *v;
  if (const json* v = r.field(doc, "", "calibration_overrides", false)) {
    if (r.object(*v, "calibration_overrides")) s.calibration_overrides = *v;
  }
  if (auto v = r.uint(doc, "", "seed")) s.seed = *v;
  if (auto v = r.uint(doc, "", "duration_us")) s.duration_us = *v;
  if (auto v = r.uint(doc, "", "probe_period_us")) s.probe_period_us = *v;
  if (auto v = r.string(doc, "", "description", false)) s.description = *v;
  if (const json* v = r.field(doc, "", "experiment", false)) {
    if (r.object(*v, "experiment")) {
      r.allowed_keys(*v, "experiment", {"local_recognition", "offload_only"});
      if (const json* lr = r.field(*v, "experiment", "local_recognition", false)) {
        if (lr->is_boolean()) s.experiment.local_recognition = lr->get<bool>();
        else r.error("experiment", "'local_recognition' must be a boolean");
      }
      if (const json* oo = r.field(*v, "experiment", "offload_only", false)) {
        bool ok = oo->is_array();
        if (ok) {
          for (const auto& id : *oo) {
            if (!id.is_string()) { ok = false; break; }
            s.experiment.offload_only.push_back(id.get<std::string>());
          }
        }
        if (!ok) r.error("experiment", "'offload_only' must be a list of node ids");
      }
    }
  }
  if (const json* v = r.field(doc, "", "transport", false)) {
    if (r.object(*v, "transport")) {
      for (const auto& [id, ep] : v->items()) {
        const std::string w = "transport." + id;
        if (!r.object(ep, w)) continue;
        r.allowed_keys(ep, w, {"host", "port"});
        Endpoint e;
        if (auto h = r.string(ep, w, "host", false)) e.host = *h;
        if (auto p = r.uint(ep, w, "port")) {
          if (*p > 65535) r.error(w, "port out of range");
          else e.port = static_cast<std::uint16_t>(*p);
        }
        s.transport[id] = e;
      }
    }
  }
  if (!result.errors.empty()) {
    // Still report invariant violations visible in what did parse.
    for (auto& e : check_scenario(s)) result.errors.push_back(std::move(e));
    return result;
  }
  return validate_scenario(s);
}

json to_json(const Scenario& s) {
  json nodes = json::array();
  for (const auto& n : s.nodes) {
    json j = {{"node_id", n.node_id},
              {"role", to_string(n.role)},
              {"patch_soft_threshold", n.patch_soft_threshold},
              {"neighbors", n.neighbors}};
    if (n.extraction_profile) j["extraction_profile"] = *n.extraction_profile;
    if (n.recognition_profile) j["recognition_profile"] = *n.recognition_profile;
    j["frame_queue_capacity"] =
        n.frame_queue_capacity ? json(*n.frame_queue_capacity) : json("unbounded");
    nodes.push_back(std::move(j));
  }
  json links = json::array();
  for (const auto& l : s.links) {
    links.push_back({{"src", l.src},
                     {"dst", l.dst},
                     {"bandwidth_bps", l.bandwidth_bps},
                     {"propagation_delay_us", l.propagation_delay_us}});
  }
  json cameras = json::array();
  for (const auto& c : s.cameras) {
    json bursts = json::array();
    for (const auto& b : c.bursts)
      bursts.push_back({{"start_us", b.start_us}, {"end_us", b.end_us}, {"rate_multiplier", b.rate_multiplier}});
    cameras.push_back({{"camera_id", c.camera_id},
                       {"fps", c.fps},
                       {"frame_size_mean_bytes", c.frame_size_mean_bytes},
                       {"frame_size_jitter", c.frame_size_jitter},
                       {"bursts", std::move(bursts)}});
  }
  json doc = {{"nodes", std::move(nodes)},
              {"links", std::move(links)},
              {"cameras", std::move(cameras)},
              {"policy", to_string(s.policy)},
              {"calibration", s.calibration},
              {"calibration_overrides", s.calibration_overrides},
              {"seed", s.seed},
              {"duration_us", s.duration_us},
              {"probe_period_us", s.probe_period_us},
              {"experiment",
               {{"local_recognition", s.experiment.local_recognition},
                {"offload_only", s.experiment.offload_only}}}};
  if (!s.description.empty()) doc["description"] = s.description;
  if (!s.transport.empty()) {
    json t = json::object();
    for (const auto& [id, ep] : s.transport) t[id] = {{"host", ep.host}, {"port", ep.port}};
    doc["transport"] = std::move(t);
  }
  return doc;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("cannot read " + path.string());
  return ss.str();
}

ValidationResult load_scenario_file(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    ValidationResult r;
    r.errors.push_back(std::string("malformed JSON: ") + e.what());
    return r;
  }
  return validate_scenario(doc);
}

json profile_to_json(const StageProfile& p) {
  json plates = json::object();
  for (std::size_t k = 0; k < p.plates_per_frame.size(); ++k) plates[std::to_string(k)] = p.plates_per_frame[k];
  return {{"name", p.name},
          {"extraction_time_us", service_to_json(p.extraction_time_us)},
          {"extraction_time_cloud_us", service_to_json(p.extraction_time_cloud_us)},
          {"recognition_time_edge_us", service_to_json(p.recognition_time_edge_us)},
          {"recognition_time_cloud_us", service_to_json(p.recognition_time_cloud_us)},
          {"plates_per_frame", plates},
          {"patch_size_ratio", p.patch_size_ratio}};
}

}  // namespace patchflow
