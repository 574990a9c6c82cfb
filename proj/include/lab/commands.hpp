#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "lab/config.hpp"

namespace lab {

// Flag overrides layered on top of the config file. Values arrive already
// validated by the CLI layer; fields left empty defer to the config.
struct RunOptions {
  std::optional<bool> defense;
  std::optional<std::string> baseline;
  std::optional<std::string> experiment;
  // Inclusive seed range; each seed runs into its own seed-<s>/ subdirectory.
  std::optional<std::pair<std::uint64_t, std::uint64_t>> seeds;
};

// "a..b" with a <= b; a single "s" means s..s. Throws config_error otherwise.
std::pair<std::uint64_t, std::uint64_t> parse_seed_range(
    const std::string& text);

// The attack configuration a run actually executes: the config's attack block
// with this run's seed, and the init protocol resolved against the bundle
// (shifted3sigma starts the estimate at mu*+3*sigma* with sigma*).
AttackConfig attack_config_for_run(const ExperimentConfig& cfg,
                                   const VictimBundle& bundle,
                                   std::uint64_t seed);

// Each command loads the config, runs, writes its artifacts plus a
// manifest.txt into the run directory, prints a one-line summary per run to
// stdout, and returns 0. Failures are reported by throwing: config_error for
// bad inputs, other lab errors for runtime trouble.
int cmd_build_victim(const std::string& config_path);
int cmd_attack(const std::string& config_path, const RunOptions& opt);
int cmd_analyze(const std::string& config_path, const RunOptions& opt);

}  // namespace lab
