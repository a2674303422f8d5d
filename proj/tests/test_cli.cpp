#include <sys/wait.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "patchflow/cli.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace patchflow::cli;

namespace {

const fs::path kScenarios = PATCHFLOW_SCENARIOS;

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class TempDir {
 public:
  TempDir() {
    static int n = 0;
    path_ = fs::temp_directory_path() / ("patchflow_cli_" + std::to_string(::getpid()) + "_" + std::to_string(n++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

Outcome tool(const std::string& args, const TempDir& tmp) {
  const auto out = tmp / "stdout.txt";
  const auto err = tmp / "stderr.txt";
  const std::string cmd = std::string(PATCHFLOW_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

// A shortened overload scenario so the CLI tests stay quick.
fs::path short_burst(const TempDir& tmp) {
  json doc = json::parse(slurp(kScenarios / "burst_reference.json"));
  doc["duration_us"] = 30'000'000;
  doc["cameras"][0]["bursts"][0] = {{"start_us", 3'000'000}, {"end_us", 30'000'000}, {"rate_multiplier", 5.0}};
  const auto p = tmp / "short_burst.json";
  std::ofstream(p) << doc.dump(2);
  return p;
}

std::vector<std::vector<std::string>> csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_CASE("validate exit codes") {
  TempDir tmp;
  CHECK(tool("validate " + (kScenarios / "minimal.json").string(), tmp).code == kOk);

  json bad = json::parse(slurp(kScenarios / "minimal.json"));
  bad["nodes"][1]["neighbors"] = {"ghost"};
  std::ofstream(tmp / "bad.json") << bad.dump();
  const auto o = tool("validate " + (tmp / "bad.json").string(), tmp);
  CHECK(o.code == kDomainError);
  CHECK(o.err.find("ghost") != std::string::npos);

  std::ofstream(tmp / "broken.json") << "{ not json";
  CHECK(tool("validate " + (tmp / "broken.json").string(), tmp).code == kDomainError);

  const auto missing = tool("validate " + (tmp / "absent.json").string(), tmp);
  CHECK(missing.code == kIoError);
  CHECK(missing.err.find("cannot read") != std::string::npos);
}

TEST_CASE("version and usage errors") {
  TempDir tmp;
  const auto v = tool("--version", tmp);
  CHECK(v.code == 0);
  CHECK(v.out.find(kToolVersion) != std::string::npos);
  CHECK(tool("simulate --scenario " + (kScenarios / "minimal.json").string() + " --policy sideways --out " +
                 (tmp / "x").string(),
             tmp)
            .code == kDomainError);
}

TEST_CASE("simulate writes deterministic outputs") {
  TempDir tmp;
  const auto scenario = short_burst(tmp);
  for (const char* run : {"a", "b"}) {
    REQUIRE(tool("simulate --scenario " + scenario.string() + " --trace --out " + (tmp / run).string(), tmp).code == 0);
  }
  for (const char* f : {"metrics.csv", "metrics.json", "records.csv", "trace.tsv"}) {
    CAPTURE(f);
    REQUIRE(fs::exists(tmp / "a" / f));
    CHECK(slurp(tmp / "a" / f) == slurp(tmp / "b" / f));
  }
  const json manifest = json::parse(slurp(tmp / "a" / "manifest.json"));
  CHECK(manifest.at("seed") == 7);
  CHECK(manifest.at("policy") == "collaborative");
  CHECK(manifest.at("tool_version") == kToolVersion);
  CHECK(manifest.at("scenario_hash").get<std::string>().size() == 16);

  const auto rows = csv(slurp(tmp / "a" / "metrics.csv"));
  CHECK(rows.front() == std::vector<std::string>{"metric", "scope", "value", "unit"});

  // A different seed gives a different run.
  REQUIRE(tool("simulate --scenario " + scenario.string() + " --seed 8 --out " + (tmp / "c").string(), tmp).code == 0);
  CHECK(slurp(tmp / "a" / "records.csv") != slurp(tmp / "c" / "records.csv"));
}

TEST_CASE("output directory defaults") {
  const auto name = std::string("unit");
  CHECK(output_dir(fs::path("explicit"), name) == fs::path("explicit"));
  ::setenv("PATCHFLOW_OUT", "/tmp/pf_root", 1);
  CHECK(output_dir(std::nullopt, name) == fs::path("/tmp/pf_root/unit"));
  ::unsetenv("PATCHFLOW_OUT");
  CHECK(output_dir(std::nullopt, name) == fs::path("runs/unit"));
}

TEST_CASE("a replayed frame file reproduces the run") {
  TempDir tmp;
  const auto scenario = short_burst(tmp);
  const auto frames = tmp / "frames.jsonl";
  REQUIRE(tool("simulate --scenario " + scenario.string() + " --frames-out " + frames.string() + " --out " +
                    (tmp / "gen").string(),
                tmp)
              .code == 0);
  REQUIRE(tool("simulate --scenario " + scenario.string() + " --replay " + frames.string() + " --out " +
                    (tmp / "rep").string(),
                tmp)
              .code == 0);
  CHECK(slurp(tmp / "gen" / "records.csv") == slurp(tmp / "rep" / "records.csv"));
  CHECK(json::parse(slurp(tmp / "rep" / "manifest.json")).contains("replay_hash"));
}

TEST_CASE("compare runs every policy on one workload") {
  TempDir tmp;
  const auto scenario = short_burst(tmp);
  REQUIRE(tool("compare --scenario " + scenario.string() + " --out " + (tmp / "cmp").string(), tmp).code == 0);
  const auto rows = csv(slurp(tmp / "cmp" / "compare.csv"));
  REQUIRE(rows.size() == 4);
  CHECK(rows[1][0] == "edge-only");
  CHECK(rows[2][0] == "cloud-only");
  CHECK(rows[3][0] == "collaborative");
  CHECK(fs::exists(tmp / "cmp" / "ratios.csv"));
  for (const char* p : {"edge-only", "cloud-only", "collaborative"}) CHECK(fs::exists(tmp / "cmp" / p / "metrics.csv"));
  // Collaborative beats edge-only under overload.
  CHECK(std::stod(rows[3][3]) > std::stod(rows[1][3]));
}

TEST_CASE("sweeping the threshold shifts work back to the edge") {
  TempDir tmp;
  const auto scenario = short_burst(tmp);
  const auto o = tool("sweep --scenario " + scenario.string() + " --param nodes.e1.patch_soft_threshold --values 1,5,50 --out " +
                          (tmp / "sw").string(),
                      tmp);
  REQUIRE(o.code == 0);
  const auto rows = csv(slurp(tmp / "sw" / "summary.csv"));
  REQUIRE(rows.size() == 4);
  CHECK(rows[0][5] == "dispatched_local");
  std::vector<long> offloaded;
  for (std::size_t i = 1; i < rows.size(); ++i) offloaded.push_back(std::stol(rows[i][6]) + std::stol(rows[i][7]));
  CHECK(offloaded[0] >= offloaded[1]);
  CHECK(offloaded[1] >= offloaded[2]);
  CHECK(offloaded[0] > offloaded[2]);
  for (const char* v : {"1", "5", "50"})
    CHECK(fs::exists(tmp / "sw" / (std::string("nodes.e1.patch_soft_threshold=") + v) / "metrics.csv"));
}

TEST_CASE("a single-value sweep equals a plain simulation") {
  TempDir tmp;
  const auto scenario = short_burst(tmp);
  REQUIRE(tool("sweep --scenario " + scenario.string() + " --param nodes.e1.patch_soft_threshold --values 5 --out " +
                   (tmp / "sw").string(),
               tmp)
              .code == 0);
  REQUIRE(tool("simulate --scenario " + scenario.string() + " --out " + (tmp / "sim").string(), tmp).code == 0);
  const auto swept = tmp / "sw" / "nodes.e1.patch_soft_threshold=5";
  for (const char* f : {"metrics.csv", "metrics.json", "records.csv"}) CHECK(slurp(swept / f) == slurp(tmp / "sim" / f));
}

TEST_CASE("sweep rejects bad parameters") {
  TempDir tmp;
  const auto scenario = short_burst(tmp);
  CHECK(tool("sweep --scenario " + scenario.string() + " --param nodes.e9.patch_soft_threshold --values 1 --out " +
                 (tmp / "a").string(),
             tmp)
            .code == kDomainError);
  CHECK(tool("sweep --scenario " + scenario.string() + " --param nodes.e1.patch_soft_threshold --values abc --out " +
                 (tmp / "b").string(),
             tmp)
            .code == kDomainError);
  CHECK(tool("sweep --scenario " + scenario.string() + " --param nodes.e1.patch_soft_threshold --values 0 --out " +
                 (tmp / "c").string(),
             tmp)
            .code == kDomainError);
  CHECK(tool("sweep --scenario " + scenario.string() + " --param nodes.e1.nothing --values 1 --out " +
                 (tmp / "d").string(),
             tmp)
            .code == kDomainError);
}

TEST_CASE("dotted paths address numbers only") {
  json doc = json::parse(slurp(kScenarios / "minimal.json"));
  set_by_path(doc, "nodes.e1.patch_soft_threshold", 9);
  CHECK(doc["nodes"][1]["patch_soft_threshold"] == 9);
  set_by_path(doc, "cameras.0.fps", 2.5);
  CHECK(doc["cameras"][0]["fps"] == 2.5);
  set_by_path(doc, "duration_us", 5);
  CHECK(doc["duration_us"] == 5);
  CHECK_THROWS_AS(set_by_path(doc, "policy", 1), std::invalid_argument);
  CHECK_THROWS_AS(set_by_path(doc, "nodes.e7.patch_soft_threshold", 1), std::invalid_argument);
  // Absent leaves are added; validation decides whether they belong.
  set_by_path(doc, "nodes.e1.frame_queue_capacity", 4);
  CHECK(doc["nodes"][1]["frame_queue_capacity"] == 4);
  CHECK_THROWS_AS(set_by_path(doc, "nodes.e1.nothing.deeper", 1), std::invalid_argument);
}

TEST_CASE("daemon refuses unknown nodes and wrong roles") {
  TempDir tmp;
  const auto minimal = (kScenarios / "minimal.json").string();
  const auto unknown = tool("daemon --scenario " + minimal + " --node-id e9", tmp);
  CHECK(unknown.code == kDomainError);
  CHECK(unknown.err.find("unknown node e9") != std::string::npos);
  CHECK(tool("daemon --scenario " + minimal + " --node-id e1 --role cloud", tmp).code == kDomainError);
  CHECK(tool("daemon --scenario " + (tmp / "none.json").string() + " --node-id e1", tmp).code == kIoError);
}
