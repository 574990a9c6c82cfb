#include "lab/dist.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "lab/errors.hpp"
#include "lab/linalg.hpp"

namespace lab {

namespace {

void require_dims(const GaussianEstimate& p, const GaussianEstimate& q) {
  if (p.dim() == 0 || p.dim() != q.dim()) {
    throw shape_error("KL: dimension mismatch (" + std::to_string(p.dim()) +
                      " vs " + std::to_string(q.dim()) + ")");
  }
}

std::vector<double> covariance_of(const GaussianEstimate& e) {
  const std::size_t n = e.dim();
  if (e.family == GaussianFamily::full) {
    if (e.cov.size() != n * n) {
      throw shape_error("full estimate: cov must be dim x dim");
    }
    return e.cov;
  }
  if (e.sigma.size() != n) {
    throw shape_error("diagonal estimate: sigma length mismatch");
  }
  std::vector<double> cov(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) cov[i * n + i] = e.sigma[i] * e.sigma[i];
  return cov;
}

void write_vector(std::ostream& out, const char* name,
                  const std::vector<double>& v) {
  out << name;
  for (double x : v) out << ' ' << std::setprecision(17) << x;
  out << '\n';
}

std::vector<double> read_vector(std::istream& in, const std::string& expect,
                                std::size_t n, const std::string& path) {
  std::string line;
  if (!std::getline(in, line)) {
    throw format_error("reference stats: missing '" + expect + "' in " + path);
  }
  std::istringstream row(line);
  std::string name;
  row >> name;
  if (name != expect) {
    throw format_error("reference stats: expected '" + expect + "', found '" +
                       name + "' in " + path);
  }
  std::vector<double> v(n);
  for (double& x : v) {
    if (!(row >> x)) {
      throw format_error("reference stats: short '" + expect + "' row in " + path);
    }
  }
  return v;
}

}  // namespace

GaussianEstimate diagonal_estimate(std::vector<double> mu,
                                   std::vector<double> sigma) {
  if (mu.size() != sigma.size() || mu.empty()) {
    throw shape_error("diagonal_estimate: mu/sigma length mismatch");
  }
  for (double s : sigma) {
    if (!(s > 0.0)) throw degenerate_error("diagonal_estimate: sigma must be positive");
  }
  GaussianEstimate e;
  e.family = GaussianFamily::diagonal;
  e.mu = std::move(mu);
  e.sigma = std::move(sigma);
  return e;
}

GaussianEstimate full_estimate(std::vector<double> mu, std::vector<double> cov) {
  const std::size_t n = mu.size();
  if (n == 0 || cov.size() != n * n) {
    throw shape_error("full_estimate: cov must be dim x dim");
  }
  GaussianEstimate e;
  e.family = GaussianFamily::full;
  e.mu = std::move(mu);
  e.cov = std::move(cov);
  return e;
}

StateSample sample(const GaussianEstimate& est, std::size_t count, Rng& rng) {
  if (count == 0) throw degenerate_error("sample: count must be positive");
  const std::size_t n = est.dim();
  StateSample out;
  out.dim = n;
  out.states.resize(count * n);
  if (est.family == GaussianFamily::diagonal) {
    if (est.sigma.size() != n) {
      throw shape_error("sample: sigma length mismatch");
    }
    for (std::size_t i = 0; i < count; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        out.states[i * n + j] = est.mu[j] + est.sigma[j] * rng.normal();
      }
    }
    return out;
  }
  const auto l = linalg::cholesky(covariance_of(est), n);
  std::vector<double> z(n);
  for (std::size_t i = 0; i < count; ++i) {
    for (double& v : z) v = rng.normal();
    double* row = out.states.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      double acc = est.mu[j];
      for (std::size_t k = 0; k <= j; ++k) acc += l[j * n + k] * z[k];
      row[j] = acc;
    }
  }
  return out;
}

StateSample sample(const GaussianEstimate& est, std::size_t count,
                   std::uint64_t rng_seed) {
  Rng rng(rng_seed);
  return sample(est, count, rng);
}

double kl_diag(const GaussianEstimate& p, const GaussianEstimate& q) {
  require_dims(p, q);
  if (p.family != GaussianFamily::diagonal ||
      q.family != GaussianFamily::diagonal) {
    throw shape_error("kl_diag: both estimates must be diagonal");
  }
  const std::size_t n = p.dim();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double sp = p.sigma[i];
    const double sq = q.sigma[i];
    const double dm = p.mu[i] - q.mu[i];
    total += std::log(sq / sp) + (sp * sp + dm * dm) / (2.0 * sq * sq) - 0.5;
  }
  return total / static_cast<double>(n);
}

double kl_full(const GaussianEstimate& p, const GaussianEstimate& q) {
  require_dims(p, q);
  const std::size_t n = p.dim();
  const auto cov_p = covariance_of(p);
  const auto cov_q = covariance_of(q);

  const double log_det_p = linalg::spd_log_det(cov_p, n);
  const double log_det_q = linalg::spd_log_det(cov_q, n);

  // tr(Sigma_q^{-1} Sigma_p): solve against each column of Sigma_p.
  double trace = 0.0;
  std::vector<double> col(n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) col[i] = cov_p[i * n + j];
    const auto x = linalg::spd_solve(cov_q, col, n);
    trace += x[j];
  }

  std::vector<double> dm(n);
  for (std::size_t i = 0; i < n; ++i) dm[i] = q.mu[i] - p.mu[i];
  const auto y = linalg::spd_solve(cov_q, dm, n);
  double maha = 0.0;
  for (std::size_t i = 0; i < n; ++i) maha += dm[i] * y[i];

  const double kl =
      0.5 * (log_det_q - log_det_p - static_cast<double>(n) + trace + maha);
  return kl / static_cast<double>(n);
}

ReferenceStats fit_reference(const StateSample& samples) {
  const std::size_t n = samples.dim;
  const std::size_t count = samples.size();
  if (count < 2) {
    throw degenerate_error("fit_reference: need at least 2 samples");
  }
  ReferenceStats stats;
  stats.sample_count = count;
  stats.mu_star.assign(n, 0.0);
  stats.lo.assign(n, std::numeric_limits<double>::infinity());
  stats.hi.assign(n, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < count; ++i) {
    const double* row = samples.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      stats.mu_star[j] += row[j];
      stats.lo[j] = std::min(stats.lo[j], row[j]);
      stats.hi[j] = std::max(stats.hi[j], row[j]);
    }
  }
  for (double& m : stats.mu_star) m /= static_cast<double>(count);

  std::vector<double> var(n, 0.0);
  for (std::size_t i = 0; i < count; ++i) {
    const double* row = samples.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      const double d = row[j] - stats.mu_star[j];
      var[j] += d * d;
    }
  }
  stats.sigma_star.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double v = var[j] / static_cast<double>(count);
    if (v <= 0.0) {
      throw degenerate_error("fit_reference: zero variance in dimension " +
                             std::to_string(j));
    }
    stats.sigma_star[j] = std::sqrt(v);
  }
  return stats;
}

void save_reference(const ReferenceStats& stats, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw format_error("save_reference: cannot write " + path);
  out << "dim " << stats.dim() << '\n';
  out << "sample_count " << stats.sample_count << '\n';
  write_vector(out, "mu_star", stats.mu_star);
  write_vector(out, "sigma_star", stats.sigma_star);
  write_vector(out, "lo", stats.lo);
  write_vector(out, "hi", stats.hi);
  if (!out) throw format_error("save_reference: write failed for " + path);
}

ReferenceStats load_reference(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw format_error("load_reference: cannot open " + path);
  std::string key;
  std::size_t n = 0;
  ReferenceStats stats;
  if (!(in >> key) || key != "dim" || !(in >> n) || n == 0) {
    throw format_error("reference stats: bad 'dim' header in " + path);
  }
  if (!(in >> key) || key != "sample_count" || !(in >> stats.sample_count)) {
    throw format_error("reference stats: bad 'sample_count' header in " + path);
  }
  std::string rest;
  std::getline(in, rest);  // consume end of the header line
  stats.mu_star = read_vector(in, "mu_star", n, path);
  stats.sigma_star = read_vector(in, "sigma_star", n, path);
  stats.lo = read_vector(in, "lo", n, path);
  stats.hi = read_vector(in, "hi", n, path);
  return stats;
}

double proxy_reward(const MlpModel& reward, const std::vector<double>& state,
                    const std::vector<double>& victim_action) {
  const double r = reward_forward(reward, state, victim_action);
  return -std::log(std::clamp(r, kRewardClamp, 1.0 - kRewardClamp));
}

RefineResult dist_refine(const TransferDataset& pruned_valset,
                         const std::vector<double>& rewards) {
  const std::size_t count = pruned_valset.size();
  const std::size_t n = pruned_valset.state_dim;
  if (count == 0) throw degenerate_error("dist_refine: empty validation set");
  if (rewards.size() != count) {
    throw shape_error("dist_refine: one reward per pair required");
  }
  double weight_sum = 0.0;
  for (double w : rewards) weight_sum += w;
  if (!(weight_sum > 0.0)) {
    throw degenerate_error("dist_refine: weight sum must be positive");
  }

  RefineResult res;
  res.mu.assign(n, 0.0);
  for (std::size_t i = 0; i < count; ++i) {
    const double* s = pruned_valset.state(i);
    for (std::size_t j = 0; j < n; ++j) res.mu[j] += rewards[i] * s[j];
  }
  for (double& m : res.mu) m /= weight_sum;

  std::vector<double> var(n, 0.0);
  for (std::size_t i = 0; i < count; ++i) {
    const double* s = pruned_valset.state(i);
    for (std::size_t j = 0; j < n; ++j) {
      const double d = s[j] - res.mu[j];
      var[j] += rewards[i] * d * d;
    }
  }
  res.sigma.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double s = std::sqrt(var[j] / weight_sum);
    if (s < kSigmaFloor) {
      res.sigma[j] = kSigmaFloor;
      res.degenerate = true;
    } else {
      res.sigma[j] = s;
    }
  }
  return res;
}

}  // namespace lab
