#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lab/dataset.hpp"
#include "lab/nn.hpp"
#include "lab/rng.hpp"

namespace lab {

enum class GaussianFamily : std::uint8_t { diagonal, full };

// State-distribution estimate. The diagonal family carries per-dimension
// sigma; the full family carries a row-major covariance matrix.
struct GaussianEstimate {
  GaussianFamily family = GaussianFamily::diagonal;
  std::vector<double> mu;
  std::vector<double> sigma;  // diagonal family
  std::vector<double> cov;    // full family, n x n row-major

  std::size_t dim() const { return mu.size(); }
};

GaussianEstimate diagonal_estimate(std::vector<double> mu,
                                   std::vector<double> sigma);
GaussianEstimate full_estimate(std::vector<double> mu, std::vector<double> cov);

struct StateSample {
  std::size_t dim = 0;
  std::vector<double> states;  // row-major, size() x dim

  std::size_t size() const { return dim == 0 ? 0 : states.size() / dim; }
  const double* row(std::size_t i) const { return states.data() + i * dim; }
};

// count i.i.d. draws; diagonal family scales per-dimension standard normals,
// full family maps them through the Cholesky factor of cov.
StateSample sample(const GaussianEstimate& est, std::size_t count, Rng& rng);
StateSample sample(const GaussianEstimate& est, std::size_t count,
                   std::uint64_t rng_seed);

// Closed-form KL divergence between diagonal Gaussians, averaged over
// dimensions: mean_i [ log(sq/sp) + (sp^2 + (mp - mq)^2) / (2 sq^2) - 1/2 ].
double kl_diag(const GaussianEstimate& p, const GaussianEstimate& q);

// Multivariate closed form divided by n for comparability with kl_diag.
// Accepts either family; a diagonal estimate is promoted to its diagonal
// covariance.
double kl_full(const GaussianEstimate& p, const GaussianEstimate& q);

// Per-dimension mean, population standard deviation, and visited range of a
// corpus of states.
struct ReferenceStats {
  std::vector<double> mu_star;
  std::vector<double> sigma_star;
  std::vector<double> lo;
  std::vector<double> hi;
  std::size_t sample_count = 0;

  std::size_t dim() const { return mu_star.size(); }
};

ReferenceStats fit_reference(const StateSample& samples);

// Text persistence with full round-trip precision.
void save_reference(const ReferenceStats& stats, const std::string& path);
ReferenceStats load_reference(const std::string& path);

// r_hat = -log(clamped discriminator output) for a (state, victim action)
// pair; large when the pair looks victim-like to the discriminator.
double proxy_reward(const MlpModel& reward, const std::vector<double>& state,
                    const std::vector<double>& victim_action);

struct RefineResult {
  std::vector<double> mu;
  std::vector<double> sigma;
  // True when any sigma component had to be floored to stay positive.
  bool degenerate = false;
};

inline constexpr double kSigmaFloor = 1e-6;

// Reward-weighted mean and population second central moment of the states in
// pruned_valset; weights are the per-pair proxy rewards.
RefineResult dist_refine(const TransferDataset& pruned_valset,
                         const std::vector<double>& rewards);

}  // namespace lab
