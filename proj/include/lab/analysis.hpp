#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lab/attack.hpp"
#include "lab/victim.hpp"

namespace lab {

// Rank-correlation statistics and post-run analyses. These harnesses probe a
// victim directly (no budget ledger): they answer "what would an attacker with
// distribution X achieve", not "what did a metered attacker consume".

struct SpearmanResult {
  double rho = 0.0;
  double p_value = 1.0;
};

// Spearman rank correlation with average ranks for ties. The p-value is the
// two-sided tail of t = rho * sqrt((m-2)/(1-rho^2)) under Student's t with
// m-2 degrees of freedom; rho = +-1 returns p = 0. Requires equal lengths
// >= 4 (shape_error) and non-constant sequences (degenerate_error).
SpearmanResult spearman(const std::vector<double>& xs,
                        const std::vector<double>& ys);

// Two-sided tail probability P(|T_df| > |t|) via the regularized incomplete
// beta function I_x(df/2, 1/2) at x = df / (df + t^2).
double student_t_two_sided(double t, double df);

// Percentage change 100 * (final - initial) / initial. Negative values mean
// the estimate moved toward the reference. initial must be positive and both
// inputs finite and nonnegative (degenerate_error otherwise).
double delta_kl(double initial_kl, double final_kl);

// One probed distribution: the signed per-dimension offset z (the probe mean
// is mu* + z*sigma*), its closed-form KL from the reference fit, and the
// validation loss of a freshly trained imitator on data queried from it.
struct CorrelationRecord {
  std::vector<double> z;
  double kl = 0.0;
  double eval_loss = 0.0;
};

struct CorrelationResult {
  std::vector<CorrelationRecord> records;
  double rho = 0.0;
  double p_value = 1.0;
};

// Imitation-difficulty vs distribution-distance experiment. Record 0 probes
// z = 0 (the reference fit itself, KL exactly 0); the remaining count-1
// records draw per-dimension |z| ~ U[0,4] with random signs. Each record
// samples points_per_dist states, queries the victim policy directly, trains
// a fresh imitator for one epoch (cfg supplies network and optimizer
// settings), and stores its validation loss. Returns the records plus the
// Spearman correlation between validation loss and KL.
CorrelationResult correlation_experiment(const VictimBundle& bundle,
                                         std::size_t count,
                                         std::size_t points_per_dist,
                                         const AttackConfig& cfg,
                                         std::uint64_t seed);

enum class SweepKind : std::uint8_t { sigma_scale, mu_shift };

struct SweepPoint {
  SweepKind kind = SweepKind::sigma_scale;
  double value = 0.0;
  double rr = 0.0;
  std::uint64_t seed = 0;
};

// Return-ratio robustness to distribution approximation error. For each
// lambda: queries from N(mu*, (lambda*sigma*)^2). For each z magnitude:
// queries from N(mu* + s.*z*sigma*, sigma*^2) with random per-dimension signs
// s. Every point spends queries_per_point victim queries and trains a fresh
// policy with the final-training regimen; the lambda = 1 (or z = 0) point
// reproduces steal_with_distribution on the reference fit bit-for-bit under
// the same seed. Lambdas must be positive (degenerate_error).
std::vector<SweepPoint> robustness_sweep(const VictimBundle& bundle,
                                         const std::vector<double>& lambdas,
                                         const std::vector<double>& z_magnitudes,
                                         std::size_t queries_per_point,
                                         const AttackConfig& cfg,
                                         std::uint64_t seed);

// CSV writers (17 significant digits, '.' decimal separator).
// correlation.csv: z0..z{n-1},kl,eval_loss. sweep.csv: kind,value,rr,seed.
void save_correlation_csv(const std::string& path,
                          const std::vector<CorrelationRecord>& records);
void save_sweep_csv(const std::string& path,
                    const std::vector<SweepPoint>& points);

}  // namespace lab
