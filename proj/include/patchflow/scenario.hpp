#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchflow/model.hpp"
#include "patchflow/workload.hpp"

namespace patchflow {

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  bool operator==(const Endpoint&) const = default;
};

// Knobs for controlled experiments that are not part of the normal model.
struct ExperimentOptions {
  // false: edges never recognize their own patches, every patch is offloaded.
  bool local_recognition = true;
  // Edges that never recognize their own patches, whatever local_recognition says.
  std::vector<std::string> offload_only;

  bool recognizes_locally(std::string_view node_id) const;

  bool operator==(const ExperimentOptions&) const = default;
};

struct Scenario {
  std::vector<NodeSpec> nodes;
  std::vector<LinkSpec> links;
  std::vector<CameraProfile> cameras;
  Policy policy = Policy::Collaborative;
  std::string calibration = "hyperlpr";
  nlohmann::json calibration_overrides = nlohmann::json::object();
  std::uint64_t seed = 0;
  Duration duration_us = 1;
  Duration probe_period_us = 100'000;
  std::string description;
  ExperimentOptions experiment;
  std::map<std::string, Endpoint> transport;

  bool operator==(const Scenario&) const = default;

  const NodeSpec* find_node(std::string_view id) const;
  const LinkSpec* find_link(std::string_view src, std::string_view dst) const;
  const NodeSpec& cloud() const;
  // Edge node a camera streams into (the destination of its link).
  const NodeSpec& camera_edge(std::string_view camera_id) const;
};

struct ValidationResult {
  std::optional<Scenario> scenario;
  std::vector<std::string> errors;

  bool ok() const { return scenario.has_value(); }
};

// Every invariant violation of an already-typed scenario; empty means valid.
std::vector<std::string> check_scenario(const Scenario& scenario);

// Parses and validates a scenario document, reporting every violation found
// (schema problems and invariant violations alike).
ValidationResult validate_scenario(const nlohmann::json& raw);
ValidationResult validate_scenario(const Scenario& raw);

nlohmann::json to_json(const Scenario& scenario);

// Resolves the stage profile for a node (its own profile reference, or the
// scenario calibration) with calibration_overrides applied.
StageProfile resolve_profile(const Scenario& scenario, const std::optional<std::string>& name);
StageProfile recognition_profile(const Scenario& scenario, const NodeSpec& node);
StageProfile extraction_profile(const Scenario& scenario, const NodeSpec& node);
nlohmann::json profile_to_json(const StageProfile& profile);

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Throws IoError when the file cannot be read. Malformed JSON is reported as
// a validation error.
ValidationResult load_scenario_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace patchflow
