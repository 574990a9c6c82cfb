#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lab/attack.hpp"
#include "lab/envs.hpp"
#include "lab/victim.hpp"

namespace lab {

// One flat key=value experiment description shared by every subcommand. A
// config file lists only the keys it wants to override; everything else keeps
// the desk-scale defaults below. `env.name` selects the preset that seeds the
// environment block, and any other `env.*` key then overrides that preset, so
// the result does not depend on key order within the file.
struct ExperimentConfig {
  ExperimentConfig();

  std::uint64_t seed = 1;
  // Relative paths are joined under POLICYLAB_OUTPUT_ROOT when that variable
  // is set; absolute paths are used as written.
  std::string output_dir = "runs/default";

  EnvSpec env;

  // Victim build. `victim.dir` is where build-victim writes the bundle and
  // where attack/analyze read it back; relative paths live under the
  // effective output directory.
  std::string victim_dir = "victim-bundle";
  std::size_t victim_trajectories = 4000;
  VictimBuildExtras victim_extras;
  int victim_epochs = 400;
  std::size_t victim_batch = 256;
  double victim_learning_rate = 1e-3;

  // Extraction run. `attack.seed` is not a key: each run derives it from the
  // top-level seed (or the --seeds fan-out).
  AttackConfig attack;
  std::string attack_init = "standard";  // standard | shifted3sigma
  // none | random1 | random10 | random100 | reffit
  std::string attack_baseline = "none";
  bool defense_enabled = false;

  // Analysis experiments.
  std::string analysis_experiment = "correlation";  // correlation | sweep
  std::size_t analysis_count = 200;
  std::size_t analysis_points_per_dist = 10000;
  std::vector<int> analysis_hidden = {64, 64};
  std::size_t analysis_batch = 32;
  double analysis_learning_rate = 1e-3;
  std::size_t analysis_queries_per_point = 100000;
  std::vector<double> analysis_lambda_list = {0.5, 0.8, 1.0, 1.25, 2.0};
  std::vector<double> analysis_z_list = {0.0, 1.0, 2.0, 3.0};
};

// Parses `key = value` lines. '#' starts a comment (whole-line or trailing),
// blank lines are skipped. Unknown keys, duplicate keys, and malformed values
// raise config_error carrying the 1-based line number. Vector values are
// space-separated (commas are accepted on input). Emitted manifests are valid
// configs, so a manifest fed back in reproduces its run.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Canonical form: every key, fixed order, doubles at full precision. Parsing
// the output yields an identical config, and identical configs serialize to
// identical bytes.
std::string serialize_config(const ExperimentConfig& cfg);

// cfg.output_dir with the POLICYLAB_OUTPUT_ROOT prefix applied when the
// variable is set and the path is relative.
std::string effective_output_dir(const ExperimentConfig& cfg);

// cfg.victim_dir resolved the same way, relative paths joining the effective
// output directory.
std::string resolve_victim_dir(const ExperimentConfig& cfg);

// Lowercase hex SHA-256 of the bytes.
std::string sha256_hex(const std::string& bytes);

// Provenance block written next to every run's artifacts. The meta travels as
// '#' comments above the resolved config, so the file doubles as a rerunnable
// config.
struct ManifestMeta {
  std::string command;
  std::string started_at;
  std::string finished_at;
  std::vector<std::string> artifacts;  // paths relative to the run directory
  std::string input_sha256;
};

std::string manifest_text(const ExperimentConfig& cfg, const ManifestMeta& meta);

// Current UTC time as 2026-01-31T09:00:00Z.
std::string utc_timestamp();

inline constexpr const char* kToolVersion = "policylab 1.0.0";

}  // namespace lab
