#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace lab {

enum class EnvName : std::uint8_t { linear_reach, damped_spring };

const char* env_name(EnvName name);
EnvName env_from_name(const std::string& name);

// Deterministic toy control environment with an affine sensor encoding
// s = scale .* x + offset applied to the latent state x. Policies only ever
// see encoded states; the encoding parameters are the undisclosed part of
// the black box.
struct EnvSpec {
  EnvName name = EnvName::linear_reach;
  int state_dim = 0;
  int action_dim = 0;
  double dt = 0.1;
  int horizon = 200;
  std::vector<double> encode_scale;
  std::vector<double> encode_offset;
  std::vector<double> init_low;   // latent coordinates
  std::vector<double> init_high;  // latent coordinates
  // damped_spring dynamics; expert feedback gains for both environments.
  double spring_kappa = 1.0;
  double spring_damping = 0.4;
  double gain_pos = 1.2;
  double gain_vel = 1.5;
  // Return floor used by the shifted return ratio; measured empirically and
  // pinned in the experiment configs.
  double r_min = 0.0;
};

// Zero-policy mean returns (measure_r_min over 100 episodes, seed 2024),
// pinned as the shifted-return-ratio floors of the default instances.
inline constexpr double kLinearReachRMin = -4.0212165073565647;
inline constexpr double kDampedSpringRMin = -11.339242123404306;

// Desk-calibrated default instances.
EnvSpec linear_reach_spec();
EnvSpec damped_spring_spec();

// Throws shape/degenerate errors when the invariants fail.
void validate_env(const EnvSpec& spec);

std::vector<double> encode_state(const EnvSpec& spec,
                                 const std::vector<double>& latent);
std::vector<double> decode_state(const EnvSpec& spec,
                                 const std::vector<double>& encoded);

struct Trajectory {
  std::vector<std::vector<double>> states;   // encoded, horizon + 1 entries
  std::vector<std::vector<double>> actions;  // horizon entries
  std::vector<double> rewards;               // horizon entries
  double total_return = 0.0;
};

// One dynamics step on an encoded state; the action is clipped to [-1,1]^k.
std::pair<std::vector<double>, double> env_step(const EnvSpec& spec,
                                                const std::vector<double>& state,
                                                const std::vector<double>& action);

// Analytic feedback controller on the decoded state.
std::vector<double> expert_action(const EnvSpec& spec,
                                  const std::vector<double>& state);

using Policy = std::function<std::vector<double>(const std::vector<double>&)>;

struct RolloutResult {
  double mean_return = 0.0;
  std::vector<Trajectory> trajectories;
};

// episodes rollouts from the latent init box, each on its own derived RNG
// stream; deterministic given rng_seed.
RolloutResult rollout(const EnvSpec& spec, const Policy& policy,
                      std::size_t episodes, std::uint64_t rng_seed);

// Plain ratio R_a / R_v, or the shifted form (R_a - r_min) / (R_v - r_min)
// whenever r_min is provided.
double return_ratio(double attacker_return, double victim_return,
                    std::optional<double> r_min);

// Mean return of the all-zeros policy: the configured floor for the shifted
// return ratio on these always-non-positive-reward environments.
double measure_r_min(const EnvSpec& spec, std::size_t episodes,
                     std::uint64_t rng_seed);

// CSV rows: episode,t,s_0..s_{n-1},a_0..a_{k-1},reward.
void save_trajectories_csv(const std::vector<Trajectory>& trajectories,
                           const std::string& path);

// Key=value persistence of a spec (vectors space-separated), full precision.
void save_env(const EnvSpec& spec, const std::string& path);
EnvSpec load_env(const std::string& path);

}  // namespace lab
