#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "cgbn/compiler.hpp"
#include "cgbn/decision.hpp"

namespace cgbn {

/// Exit statuses shared by every command.
enum ExitCode : int { kExitOk = 0, kExitDomain = 1, kExitIo = 2 };

/// Contents of a run configuration file with paths resolved against the
/// file's directory, after command-line overrides.
struct RunConfig {
  std::filesystem::path network;
  std::filesystem::path evidence;  // empty: no evidence
  std::filesystem::path model;     // compiled model read by `report`
  std::filesystem::path out = "out";
  Policy policy;
  std::string sensor = "SS";
  std::string target = "SCD";
  std::string assay = "ACD";
  int grid_points = kDefaultGridPoints;
  std::vector<std::string> infer_targets;  // empty: every unobserved continuous node
  int curve_points = 401;
  int batches = 20;
  int samples = 1000;
  std::uint64_t seed = 1;
};

struct Overrides {
  std::optional<std::filesystem::path> network;
  std::optional<std::filesystem::path> evidence;
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
};

/// Reads a configuration file. Throws FormatError on unreadable or malformed input.
RunConfig load_config(const std::filesystem::path& path, const Overrides& o = {});
/// Configuration without a file: defaults plus overrides.
RunConfig default_config(const Overrides& o = {});

int cmd_validate(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_infer(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_compile(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_report(const RunConfig& cfg, std::ostream& out, std::ostream& err);
/// Writes the reference network, its assay evidence and a matching config.
int cmd_fixture(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Ellipse rows for every component and for the moment-matched Gaussian.
std::string ellipses_csv(const CompiledModel& cm);
/// s, tail probability, threshold and action across the rule's scanned range.
std::string decision_curve_csv(const CompiledModel& cm, const Policy& p, int points);

/// Full command-line entry point.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace cgbn
