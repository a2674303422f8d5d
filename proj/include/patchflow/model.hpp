#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace patchflow {

// Simulation time and durations, in microseconds.
using Time = std::uint64_t;
using Duration = std::uint64_t;

// Fixed wire overhead added to every patch or raw frame transfer.
inline constexpr std::uint64_t kPatchHeaderBytes = 64;
// Size of the recognition report each edge sends to the cloud.
inline constexpr std::uint64_t kResultMessageBytes = 256;

enum class NodeRole { Edge, Cloud };
enum class Policy { EdgeOnly, CloudOnly, Collaborative };

std::string_view to_string(NodeRole role);
std::string_view to_string(Policy policy);
std::optional<NodeRole> parse_role(std::string_view s);
std::optional<Policy> parse_policy(std::string_view s);

// A policy-level contract was broken (e.g. extraction requested on the cloud
// under the collaborative policy).
class PolicyError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct FrameDescriptor {
  std::uint64_t frame_id = 0;
  std::string camera_id;
  Time capture_time = 0;
  std::uint64_t size_bytes = 1;

  bool operator==(const FrameDescriptor&) const = default;
};

// One extracted plate patch awaiting recognition.
struct PatchDescriptor {
  std::string patch_id;
  std::string camera_id;
  std::uint64_t frame_id = 0;
  Time capture_time = 0;
  // 1-based position of this patch among the plates of its frame.
  std::uint32_t index = 1;
  std::uint32_t siblings = 1;
  std::uint64_t size_bytes = 1;
  Time extracted_at = 0;
  std::string origin_node;
  std::vector<std::string> hops;

  bool operator==(const PatchDescriptor&) const = default;
};

struct RecognitionRecord {
  std::string patch_id;
  std::string plate_text;
  std::string processed_by;
  Time completed_at = 0;
  Duration end_to_end_latency = 0;

  bool operator==(const RecognitionRecord&) const = default;
};

std::string make_patch_id(std::string_view camera_id, std::uint64_t frame_id, std::uint32_t index);
// Synthetic recognition output: "{camera_id}-{frame_id}-{k}".
std::string make_plate_text(std::string_view camera_id, std::uint64_t frame_id,
                            std::uint32_t index);

struct NodeSpec {
  std::string node_id;
  NodeRole role = NodeRole::Edge;
  std::optional<std::string> extraction_profile;
  std::optional<std::string> recognition_profile;
  // Soft occupancy threshold on the patch queue; exceeding it triggers offload.
  std::uint64_t patch_soft_threshold = 1;
  // nullopt means unbounded.
  std::optional<std::uint64_t> frame_queue_capacity;
  std::vector<std::string> neighbors;

  bool operator==(const NodeSpec&) const = default;
};

struct LinkSpec {
  std::string src;
  std::string dst;
  double bandwidth_bps = 1.0;
  Duration propagation_delay_us = 0;

  bool operator==(const LinkSpec&) const = default;
};

// Serialization time ceil(bytes * 8e6 / bandwidth) in microseconds.
Duration serialization_time(const LinkSpec& link, std::uint64_t payload_bytes);
// Serialization time plus propagation delay.
Duration transfer_time(const LinkSpec& link, std::uint64_t payload_bytes);

}  // namespace patchflow
