#pragma once

#include <cstddef>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "lab/dist.hpp"
#include "lab/envs.hpp"
#include "lab/nn.hpp"

namespace lab {

// A frozen victim: its policy network, the reference statistics of the states
// it visited while being built, and how well it performs.
struct VictimBundle {
  MlpModel policy;
  ReferenceStats ref;
  // Population covariance of the visited states, n x n row-major. The
  // diagonal matches ref.sigma_star squared; off-diagonals let the exposed
  // reference be fit as a full-covariance Gaussian.
  std::vector<double> cov_star;
  EnvSpec env;
  double victim_return = 0.0;
  double victim_return_spread = 0.0;  // population sd over eval episodes
  double expert_return = 0.0;
};

struct VictimBuildExtras {
  double sigma_explore = 0.05;       // noise on executed actions
  std::vector<int> hidden = {256, 256};
  std::size_t eval_episodes = 8;
  double competence_ratio = 0.9;     // shifted return ratio vs the expert
  double val_target = 1e-3;          // stop cloning below this val loss
  std::size_t min_visited = 10000;   // reference-stats corpus floor
};

// Rolls out the noisy analytic expert, clones it, fits reference statistics
// from the visited states, and evaluates the result. cfg.epochs is the cap on
// cloning epochs. Deterministic given rng_seed.
VictimBundle train_victim(const EnvSpec& env, std::size_t trajectories,
                          const TrainConfig& cfg, std::uint64_t rng_seed,
                          const VictimBuildExtras& extras = {});

// Query-budget bookkeeping shared by everything that touches one victim.
struct BudgetLedger {
  std::size_t total = 0;       // B
  std::size_t reserved = 0;    // B_r
  std::size_t consumed = 0;    // B_c so far
  std::size_t base = 0;        // b_v
  std::size_t attacker = 0;    // b_a
  std::size_t next_chunk = 0;  // b_c for the upcoming round

  std::size_t remaining() const { return total - consumed; }
};

BudgetLedger make_ledger(std::size_t total, std::size_t reserved,
                         std::size_t base, std::size_t attacker);

struct DefenseRange {
  std::vector<double> lo;
  std::vector<double> hi;
};

// The black box the attacker talks to. Every query of m states advances the
// ledger by exactly m or fails atomically without an answer. With a defense
// configured, out-of-range states get uniform random actions from a dedicated
// stream; in-range states are answered exactly like the undefended oracle.
class Oracle {
 public:
  Oracle(const MlpModel& policy, BudgetLedger& ledger);
  Oracle(const MlpModel& policy, BudgetLedger& ledger, DefenseRange range,
         std::uint64_t defense_seed);

  // Row-major actions, states.size() x action_dim.
  std::vector<double> query(const StateSample& states);

  bool defended() const { return defense_.has_value(); }
  const BudgetLedger& ledger() const { return ledger_; }
  BudgetLedger& ledger() { return ledger_; }

 private:
  const MlpModel& policy_;
  BudgetLedger& ledger_;
  std::optional<DefenseRange> defense_;
  std::optional<Rng> defense_rng_;
  std::mutex mutex_;
};

// Builds the defense range straight from the reference statistics.
DefenseRange defense_from_reference(const ReferenceStats& ref);

// Bundle persistence: policy.json, reference.txt, env.txt, meta.txt under dir.
void save_victim_bundle(const VictimBundle& bundle, const std::string& dir);
VictimBundle load_victim_bundle(const std::string& dir);

}  // namespace lab
