#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "patchflow/model.hpp"
#include "patchflow/rng.hpp"

namespace patchflow {

// Uniform service time: mean * (1 + u), u ~ U[-jitter, +jitter].
struct ServiceTimeModel {
  double mean_us = 1.0;
  double jitter = 0.0;

  bool operator==(const ServiceTimeModel&) const = default;
};

// Cost and yield parameters for one algorithm group.
struct StageProfile {
  std::string name;
  ServiceTimeModel extraction_time_us;
  // Only used by the cloud-only baseline, where the cloud extracts.
  ServiceTimeModel extraction_time_cloud_us;
  ServiceTimeModel recognition_time_edge_us;
  ServiceTimeModel recognition_time_cloud_us;
  // Probability of 0, 1, 2, 3 plates in a frame.
  std::array<double, 4> plates_per_frame{0.2, 0.6, 0.15, 0.05};
  // Fraction of the parent frame's bytes carried by all its patches together.
  double patch_size_ratio = 0.5;

  bool operator==(const StageProfile&) const = default;
};

std::vector<std::string> check_profile(const StageProfile& profile);

// Built-in calibrations: "hyperlpr", "yolo", "mtcnn".
std::optional<StageProfile> preset_profile(std::string_view name);
std::vector<std::string> preset_names();

struct Burst {
  Time start_us = 0;
  Time end_us = 0;
  double rate_multiplier = 1.0;

  bool operator==(const Burst&) const = default;
};

struct CameraProfile {
  std::string camera_id;
  double fps = 25.0;
  std::uint64_t frame_size_mean_bytes = 1;
  double frame_size_jitter = 0.0;
  std::vector<Burst> bursts;

  bool operator==(const CameraProfile&) const = default;
};

// Rate multiplier of the burst active at `now`, or 1.
double active_multiplier(const CameraProfile& camera, Time now);
Duration inter_arrival_time(const CameraProfile& camera, Time now);

struct FrameArrival {
  FrameDescriptor frame;
  Time next_arrival = 0;
};

FrameArrival next_frame(const CameraProfile& camera, std::uint64_t frame_id, Time now,
                        RandomStream& rng);

std::uint32_t draw_plate_count(const StageProfile& profile, RandomStream& rng);

// Splits round(frame_bytes * ratio) across `plates` patches, evenly, with the
// remainder on the first patch. Every patch gets at least one byte.
std::vector<std::uint64_t> split_patch_sizes(std::uint64_t frame_bytes, double ratio,
                                             std::uint32_t plates);

std::vector<PatchDescriptor> make_patches(const FrameDescriptor& frame,
                                          const std::vector<std::uint64_t>& sizes,
                                          Time extracted_at, std::string_view origin_node);

// Draws a plate count and emits the patches. An empty result means nothing is
// appended to the patch queue.
std::vector<PatchDescriptor> extract_outcome(const FrameDescriptor& frame,
                                             const StageProfile& profile, RandomStream& rng,
                                             Time extracted_at, std::string_view origin_node);

enum class Stage { Extraction, Recognition };

Duration service_time(Stage stage, NodeRole role, const StageProfile& profile, Policy policy,
                      RandomStream& rng);
Duration draw_service_time(const ServiceTimeModel& model, RandomStream& rng);

// One line of a frame-event file: a frame and its extraction outcome, so that
// a run can be replayed exactly by the simulator or by the live daemons.
struct FrameEvent {
  std::string camera_id;
  std::uint64_t frame_id = 0;
  Time time_us = 0;
  std::uint64_t size_bytes = 1;
  std::vector<std::uint64_t> patch_sizes;

  std::uint32_t plates() const { return static_cast<std::uint32_t>(patch_sizes.size()); }
  FrameDescriptor descriptor() const { return {frame_id, camera_id, time_us, size_bytes}; }
  bool operator==(const FrameEvent&) const = default;
};

void write_frame_events(std::ostream& out, const std::vector<FrameEvent>& events);
// Throws std::runtime_error naming the offending line.
std::vector<FrameEvent> read_frame_events(std::istream& in);

}  // namespace patchflow
