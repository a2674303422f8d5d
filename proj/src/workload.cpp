#include "patchflow/workload.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace patchflow {
namespace {

std::uint64_t round_positive(double v) {
  const double r = std::round(v);
  return r < 1.0 ? 1 : static_cast<std::uint64_t>(r);
}

StageProfile make_preset(std::string name, ServiceTimeModel extraction,
                         ServiceTimeModel extraction_cloud, ServiceTimeModel recognition_edge,
                         ServiceTimeModel recognition_cloud, double ratio) {
  StageProfile p;
  p.name = std::move(name);
  p.extraction_time_us = extraction;
  p.extraction_time_cloud_us = extraction_cloud;
  p.recognition_time_edge_us = recognition_edge;
  p.recognition_time_cloud_us = recognition_cloud;
  p.plates_per_frame = {0.2, 0.6, 0.15, 0.05};
  p.patch_size_ratio = ratio;
  return p;
}

}  // namespace

// Edge recognition means are set so that one edge saturates at 1.8 (hyperlpr,
// mtcnn) or 1.6 (yolo) plate-bearing frames per second given the default
// yield of 1.3125 plates per such frame. yolo's heavier extraction caps an
// edge at ~10 frames/s.
std::optional<StageProfile> preset_profile(std::string_view name) {
  if (name == "hyperlpr") {
    return make_preset("hyperlpr", {50'000, 0.1}, {15'000, 0.1}, {423'280, 0.1}, {40'000, 0.1},
                       0.5181);
  }
  if (name == "yolo") {
    return make_preset("yolo", {100'000, 0.1}, {20'000, 0.1}, {476'190, 0.1}, {50'000, 0.1},
                       0.5214);
  }
  if (name == "mtcnn") {
    return make_preset("mtcnn", {60'000, 0.1}, {18'000, 0.1}, {423'280, 0.1}, {35'000, 0.1},
                       0.5157);
  }
  return std::nullopt;
}

std::vector<std::string> preset_names() { return {"hyperlpr", "mtcnn", "yolo"}; }

std::vector<std::string> check_profile(const StageProfile& p) {
  std::vector<std::string> errors;
  const auto check_model = [&](const ServiceTimeModel& m, const char* what) {
    if (!(m.mean_us > 0.0)) errors.push_back(std::string(what) + " mean must be positive");
    if (!(m.jitter >= 0.0 && m.jitter < 1.0))
      errors.push_back(std::string(what) + " jitter must be in [0,1)");
  };
  check_model(p.extraction_time_us, "extraction_time_us");
  check_model(p.extraction_time_cloud_us, "extraction_time_cloud_us");
  check_model(p.recognition_time_edge_us, "recognition_time_edge_us");
  check_model(p.recognition_time_cloud_us, "recognition_time_cloud_us");
  double sum = 0.0;
  for (double q : p.plates_per_frame) {
    if (!(q >= 0.0)) errors.push_back("plates_per_frame probabilities must be non-negative");
    sum += q;
  }
  if (std::abs(sum - 1.0) > 1e-9) errors.push_back("plates_per_frame probabilities must sum to 1");
  if (!(p.patch_size_ratio > 0.0 && p.patch_size_ratio < 1.0))
    errors.push_back("patch_size_ratio must be in (0,1)");
  if (!(p.recognition_time_cloud_us.mean_us < p.recognition_time_edge_us.mean_us))
    errors.push_back("recognition_time_cloud_us mean must be below recognition_time_edge_us mean");
  return errors;
}

double active_multiplier(const CameraProfile& camera, Time now) {
  for (const auto& b : camera.bursts) {
    if (b.start_us <= now && now < b.end_us) return b.rate_multiplier;
  }
  return 1.0;
}

Duration inter_arrival_time(const CameraProfile& camera, Time now) {
  return round_positive(1e6 / (camera.fps * active_multiplier(camera, now)));
}

FrameArrival next_frame(const CameraProfile& camera, std::uint64_t frame_id, Time now,
                        RandomStream& rng) {
  FrameArrival out;
  out.frame.frame_id = frame_id;
  out.frame.camera_id = camera.camera_id;
  out.frame.capture_time = now;
  const double j = camera.frame_size_jitter;
  const double u = j > 0.0 ? rng.uniform(-j, j) : 0.0;
  out.frame.size_bytes = round_positive(static_cast<double>(camera.frame_size_mean_bytes) * (1.0 + u));
  out.next_arrival = now + inter_arrival_time(camera, now);
  return out;
}

std::uint32_t draw_plate_count(const StageProfile& profile, RandomStream& rng) {
  const double u = rng.next_unit();
  double acc = 0.0;
  for (std::uint32_t k = 0; k < profile.plates_per_frame.size(); ++k) {
    acc += profile.plates_per_frame[k];
    if (u < acc) return k;
  }
  // Rounding slack in the table: fall back to the last non-zero entry.
  for (std::uint32_t k = profile.plates_per_frame.size(); k-- > 0;) {
    if (profile.plates_per_frame[k] > 0.0) return k;
  }
  return 0;
}

std::vector<std::uint64_t> split_patch_sizes(std::uint64_t frame_bytes, double ratio,
                                             std::uint32_t plates) {
  if (plates == 0) return {};
  auto total = static_cast<std::uint64_t>(std::llround(static_cast<double>(frame_bytes) * ratio));
  // A patch is never empty; only reachable for frames of a few bytes.
  total = std::max<std::uint64_t>(total, plates);
  std::vector<std::uint64_t> sizes(plates, total / plates);
  sizes.front() += total % plates;
  return sizes;
}

std::vector<PatchDescriptor> make_patches(const FrameDescriptor& frame,
                                          const std::vector<std::uint64_t>& sizes,
                                          Time extracted_at, std::string_view origin_node) {
  std::vector<PatchDescriptor> patches;
  patches.reserve(sizes.size());
  const auto siblings = static_cast<std::uint32_t>(sizes.size());
  for (std::uint32_t i = 0; i < siblings; ++i) {
    PatchDescriptor p;
    p.index = i + 1;
    p.siblings = siblings;
    p.patch_id = make_patch_id(frame.camera_id, frame.frame_id, p.index);
    p.camera_id = frame.camera_id;
    p.frame_id = frame.frame_id;
    p.capture_time = frame.capture_time;
    p.size_bytes = sizes[i];
    p.extracted_at = extracted_at;
    p.origin_node = std::string(origin_node);
    p.hops = {p.origin_node};
    patches.push_back(std::move(p));
  }
  return patches;
}

std::vector<PatchDescriptor> extract_outcome(const FrameDescriptor& frame,
                                             const StageProfile& profile, RandomStream& rng,
                                             Time extracted_at, std::string_view origin_node) {
  const std::uint32_t k = draw_plate_count(profile, rng);
  return make_patches(frame, split_patch_sizes(frame.size_bytes, profile.patch_size_ratio, k),
                      extracted_at, origin_node);
}

Duration draw_service_time(const ServiceTimeModel& model, RandomStream& rng) {
  const double u = model.jitter > 0.0 ? rng.uniform(-model.jitter, model.jitter) : 0.0;
  return round_positive(model.mean_us * (1.0 + u));
}

Duration service_time(Stage stage, NodeRole role, const StageProfile& profile, Policy policy,
                      RandomStream& rng) {
  if (stage == Stage::Extraction) {
    if (role == NodeRole::Cloud) {
      if (policy != Policy::CloudOnly)
        throw PolicyError("extraction on the cloud is only legal under the cloud-only policy");
      return draw_service_time(profile.extraction_time_cloud_us, rng);
    }
    return draw_service_time(profile.extraction_time_us, rng);
  }
  return draw_service_time(
      role == NodeRole::Edge ? profile.recognition_time_edge_us : profile.recognition_time_cloud_us,
      rng);
}

void write_frame_events(std::ostream& out, const std::vector<FrameEvent>& events) {
  for (const auto& e : events) {
    nlohmann::json j = {{"camera_id", e.camera_id},   {"frame_id", e.frame_id},
                        {"time_us", e.time_us},       {"size_bytes", e.size_bytes},
                        {"plates", e.plates()},       {"patch_sizes", e.patch_sizes}};
    out << j.dump() << '\n';
  }
}

std::vector<FrameEvent> read_frame_events(std::istream& in) {
  std::vector<FrameEvent> events;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      FrameEvent e;
      e.camera_id = j.at("camera_id").get<std::string>();
      e.frame_id = j.at("frame_id").get<std::uint64_t>();
      e.time_us = j.at("time_us").get<std::uint64_t>();
      e.size_bytes = j.at("size_bytes").get<std::uint64_t>();
      e.patch_sizes = j.at("patch_sizes").get<std::vector<std::uint64_t>>();
      if (j.contains("plates") && j.at("plates").get<std::uint64_t>() != e.patch_sizes.size())
        throw std::runtime_error("plates does not match patch_sizes");
      if (e.size_bytes == 0) throw std::runtime_error("size_bytes must be positive");
      for (auto s : e.patch_sizes)
        if (s == 0) throw std::runtime_error("patch sizes must be positive");
      events.push_back(std::move(e));
    } catch (const std::exception& ex) {
      throw std::runtime_error("frame-event line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return events;
}

}  // namespace patchflow
