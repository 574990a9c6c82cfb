#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lab/dataset.hpp"
#include "lab/dist.hpp"
#include "lab/nn.hpp"
#include "lab/victim.hpp"

namespace lab {

// Query-budget knobs for one extraction run. Only victim queries consume the
// total; the attacker querying its own policy is free.
struct BudgetParams {
  std::size_t total = 2000000;    // B
  std::size_t reserved = 200000;  // B_r, spent only by the final top-up
  std::size_t base = 20000;       // b_v, per-iteration floor
  std::size_t attacker = 0;       // b_a; 0 ties it to the current chunk
};

TrainConfig default_final_train();

struct AttackConfig {
  BudgetParams budget;
  int epochs_per_iter = 1;
  std::vector<double> init_mu;     // empty -> zeros
  std::vector<double> init_sigma;  // empty -> ones
  // Ablation switches; all on reproduces the full method.
  bool fixed_evaluator_budget = true;
  bool use_reward_model = true;
  bool prune = true;
  bool dynamic_bc_budget = true;
  std::vector<int> attacker_hidden = {256, 256};
  std::vector<int> evaluator_hidden = {256, 256};
  std::vector<int> reward_hidden = {256, 256};
  Activation hidden_activation = Activation::tanh;
  double learning_rate = 1e-3;  // in-loop cloning and evaluator
  std::size_t batch_size = 1024;
  int reward_steps = 400;
  double reward_learning_rate = 1e-3;
  std::size_t reward_batch = 1024;
  // Lower bound on per-step sample demands so a collapsed sigma can never
  // make a train/validation split impossible.
  std::size_t demand_floor = 100;
  TrainConfig final_train = default_final_train();
  std::size_t eval_episodes = 8;
  std::uint64_t seed = 0;
};

struct IterationRecord {
  std::size_t index = 0;     // 0-based
  std::size_t consumed = 0;  // cumulative victim queries after this iteration
  std::vector<double> mu;    // estimate that generated this iteration's queries
  std::vector<double> sigma;
  double sigma_mean = 0.0;   // mean of sigma above
  double eval_loss = 0.0;    // evaluator validation loss for this estimate
  double kl = 0.0;           // KL(reference || estimate), per-dimension mean
  std::size_t b_c = 0;       // victim queries paid this iteration
  bool selected = false;     // true on exactly the argmax-eval-loss iteration
  bool refine_warning = false;
};

struct SelectedEstimate {
  std::vector<double> mu;
  std::vector<double> sigma;
  double eval_loss = 0.0;
  std::size_t iteration = 0;
};

struct FinalMetrics {
  double return_ratio = 0.0;
  double attacker_return = 0.0;
  double victim_return = 0.0;
  double kl = 0.0;  // KL(reference || selected estimate)
};

struct AttackReport {
  std::vector<IterationRecord> iterations;
  SelectedEstimate selected;
  FinalMetrics final;
  std::vector<std::string> warnings;
  std::uint64_t seed = 0;
  std::size_t consumed_total = 0;
  double wall_seconds = 0.0;
};

struct ExtractionResult {
  MlpModel policy;
  AttackReport report;
};

// Draws b states from the estimate, answers them through the metered oracle,
// and packages the pairs with a fresh 90/10 split. Budget errors propagate.
TransferDataset query_action(Oracle& oracle, const GaussianEstimate& est,
                             std::size_t b, std::uint64_t rng_seed);

// Same sampling, but against a local policy: free of charge.
TransferDataset self_query(const MlpModel& policy, const GaussianEstimate& est,
                           std::size_t b, std::uint64_t rng_seed);

// Trains the freshly initialized evaluator on `demand` pairs sampled from d_v
// and returns its validation loss: high when the data is hard to imitate,
// which is the fingerprint of querying where the victim actually operates.
double distribution_evaluate(const TransferDataset& d_v, MlpModel evaluator,
                             std::size_t demand, const TrainConfig& cfg);

struct FinalTrainResult {
  MlpModel policy;
  std::size_t dataset_size = 0;  // pairs after the top-up union
  double val_loss = 0.0;
  int epochs_run = 0;
};

// Spends every remaining query at the selected estimate, unions with the
// stored dataset, and retrains a reinitialized policy with early stopping.
// With nothing left to spend it trains on d_tilde alone.
FinalTrainResult final_retrain(TransferDataset d_tilde, Oracle& oracle,
                               const std::vector<double>& mu,
                               const std::vector<double>& sigma,
                               const AttackConfig& cfg);

// The full iterative distribution-estimation attack against a built victim:
// query, evaluate, clone, discriminate, refine, then top up and retrain at
// the best estimate found. Deterministic in (bundle, defended, cfg).
ExtractionResult extraction_attack(const VictimBundle& bundle, bool defended,
                                   const AttackConfig& cfg);

struct BaselineResult {
  MlpModel policy;
  double return_ratio = 0.0;
  double attacker_return = 0.0;
  double victim_return = 0.0;
  std::size_t consumed = 0;
};

// Spends the whole budget querying states from the given distribution, clones
// the answers with the final-training regimen, and evaluates the result.
// Shared backbone of the fixed-distribution attacks below.
BaselineResult steal_with_distribution(const VictimBundle& bundle,
                                       bool defended,
                                       const GaussianEstimate& est,
                                       const AttackConfig& cfg);

// All queries from N(0, scale^2 I): the no-knowledge baseline.
BaselineResult random_baseline(const VictimBundle& bundle, bool defended,
                               double scale, const AttackConfig& cfg);

// All queries from the victim's own reference fit (diagonal, or the stored
// full covariance): what leaking the reference statistics costs the defender.
BaselineResult reference_fit_steal(const VictimBundle& bundle, bool defended,
                                   GaussianFamily family,
                                   const AttackConfig& cfg);

void save_report_json(const AttackReport& report, const std::string& path);
void save_iterations_csv(const AttackReport& report, const std::string& path);

}  // namespace lab
