#include "patchflow/model.hpp"

#include <cmath>
#include <limits>

namespace patchflow {

std::string_view to_string(NodeRole role) {
  return role == NodeRole::Edge ? "edge" : "cloud";
}

std::string_view to_string(Policy policy) {
  switch (policy) {
    case Policy::EdgeOnly:
      return "edge-only";
    case Policy::CloudOnly:
      return "cloud-only";
    case Policy::Collaborative:
      return "collaborative";
  }
  return "?";
}

std::optional<NodeRole> parse_role(std::string_view s) {
  if (s == "edge") return NodeRole::Edge;
  if (s == "cloud") return NodeRole::Cloud;
  return std::nullopt;
}

std::optional<Policy> parse_policy(std::string_view s) {
  if (s == "edge-only") return Policy::EdgeOnly;
  if (s == "cloud-only") return Policy::CloudOnly;
  if (s == "collaborative") return Policy::Collaborative;
  return std::nullopt;
}

std::string make_patch_id(std::string_view camera_id, std::uint64_t frame_id,
                          std::uint32_t index) {
  std::string id(camera_id);
  id += '/';
  id += std::to_string(frame_id);
  id += '/';
  id += std::to_string(index);
  return id;
}

std::string make_plate_text(std::string_view camera_id, std::uint64_t frame_id,
                            std::uint32_t index) {
  std::string text(camera_id);
  text += '-';
  text += std::to_string(frame_id);
  text += '-';
  text += std::to_string(index);
  return text;
}

Duration serialization_time(const LinkSpec& link, std::uint64_t payload_bytes) {
  const double bw = link.bandwidth_bps;
  // Integral bandwidths get an exact integer ceiling; everything else falls
  // back to extended precision.
  if (bw >= 1.0 && bw <= 1.8e19 && std::floor(bw) == bw) {
    const auto bw_int = static_cast<unsigned __int128>(bw);
    const unsigned __int128 bits = static_cast<unsigned __int128>(payload_bytes) * 8'000'000u;
    return static_cast<Duration>((bits + bw_int - 1) / bw_int);
  }
  const long double us =
      static_cast<long double>(payload_bytes) * 8.0e6L / static_cast<long double>(bw);
  return static_cast<Duration>(std::ceil(us));
}

Duration transfer_time(const LinkSpec& link, std::uint64_t payload_bytes) {
  return serialization_time(link, payload_bytes) + link.propagation_delay_us;
}

}  // namespace patchflow
