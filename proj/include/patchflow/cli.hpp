#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchflow/model.hpp"

namespace patchflow::cli {

inline constexpr const char* kToolVersion = "0.3.0";

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kDomainError = 1;
inline constexpr int kIoError = 2;

struct RunManifest {
  std::string scenario_path;
  std::string scenario_hash;  // FNV-1a 64 of the file bytes, hex
  std::uint64_t seed = 0;
  std::string policy;
  std::string calibration;
  std::string tool_version = kToolVersion;
  std::string output_dir;
  std::optional<std::string> replay_path;
  std::optional<std::string> replay_hash;

  nlohmann::json to_json() const;
};

// --out if given, else $PATCHFLOW_OUT/<name>, else runs/<name>.
std::filesystem::path output_dir(const std::optional<std::filesystem::path>& out, const std::string& name);

int cmd_validate(const std::filesystem::path& scenario, std::ostream& out, std::ostream& err);

struct SimulateOptions {
  std::filesystem::path scenario;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> policy;
  std::optional<std::filesystem::path> out;
  bool trace = false;
  std::optional<std::filesystem::path> frames_out;
  std::optional<std::filesystem::path> replay;
};
int cmd_simulate(const SimulateOptions& options, std::ostream& out, std::ostream& err);

struct CompareOptions {
  std::filesystem::path scenario;
  std::vector<std::string> policies{"edge-only", "cloud-only", "collaborative"};
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
};
int cmd_compare(const CompareOptions& options, std::ostream& out, std::ostream& err);

struct SweepOptions {
  std::filesystem::path scenario;
  std::string param;  // dotted path, e.g. nodes.e1.patch_soft_threshold
  std::vector<std::string> values;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
};
int cmd_sweep(const SweepOptions& options, std::ostream& out, std::ostream& err);

// Sets a numeric field addressed by a dotted path. List elements are
// selected by index or by their node_id / camera_id. Throws
// std::invalid_argument when the path does not address a number.
void set_by_path(nlohmann::json& doc, const std::string& path, const nlohmann::json& value);

struct DaemonOptions {
  std::filesystem::path scenario;
  std::string node_id;
  std::optional<std::string> role;
  std::optional<std::filesystem::path> replay;
  double time_scale = 1.0;
  std::optional<std::uint16_t> port;
  bool exit_when_idle = false;
  std::uint64_t idle_grace_ms = 2000;
  std::optional<std::uint64_t> expect_records;
  std::optional<std::filesystem::path> archive;
  std::optional<std::filesystem::path> out;
};
int cmd_daemon(const DaemonOptions& options, std::ostream& out, std::ostream& err);

// Parses argv and dispatches to a command.
int run(int argc, char** argv);

}  // namespace patchflow::cli
