#include "lab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "lab/dist.hpp"
#include "lab/errors.hpp"
#include "lab/nn.hpp"
#include "lab/rng.hpp"
#include "lab/textio.hpp"

namespace lab {
namespace {

// Average ranks (1-based); tied values share the mean of their positions.
std::vector<double> average_ranks(const std::vector<double>& xs) {
  const std::size_t m = xs.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&xs](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(m, 0.0);
  std::size_t i = 0;
  while (i < m) {
    std::size_t j = i;
    while (j + 1 < m && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double shared = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = shared;
    i = j + 1;
  }
  return ranks;
}

// Continued fraction for the regularized incomplete beta (Lentz's method).
double incbeta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double md = static_cast<double>(m);
    const double m2 = 2.0 * md;
    double aa = md * (b - md) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + md) * (qab + md) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) <= kEps) break;
  }
  return h;
}

// Regularized incomplete beta I_x(a, b).
double incbeta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double lbeta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
  const double front = std::exp(a * std::log(x) + b * std::log1p(-x) - lbeta);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * incbeta_cf(a, b, x) / a;
  }
  return 1.0 - front * incbeta_cf(b, a, 1.0 - x) / b;
}

std::vector<int> analysis_net_dims(std::size_t in, const std::vector<int>& hidden,
                                   std::size_t out) {
  std::vector<int> dims;
  dims.reserve(hidden.size() + 2);
  dims.push_back(static_cast<int>(in));
  for (int h : hidden) dims.push_back(h);
  dims.push_back(static_cast<int>(out));
  return dims;
}

void require_finite(const std::vector<double>& xs, const char* who) {
  for (double x : xs) {
    if (!std::isfinite(x)) {
      throw numeric_error(std::string(who) + ": non-finite input value");
    }
  }
}

bool is_constant(const std::vector<double>& xs) {
  for (double x : xs) {
    if (x != xs.front()) return false;
  }
  return true;
}

std::string kind_name(SweepKind kind) {
  return kind == SweepKind::sigma_scale ? "sigma_scale" : "mu_shift";
}

}  // namespace

double student_t_two_sided(double t, double df) {
  if (!(df > 0.0) || !std::isfinite(df)) {
    throw degenerate_error("student_t_two_sided: degrees of freedom must be positive");
  }
  if (!std::isfinite(t)) return 0.0;
  const double x = df / (df + t * t);
  const double p = incbeta(0.5 * df, 0.5, x);
  return std::min(1.0, std::max(0.0, p));
}

SpearmanResult spearman(const std::vector<double>& xs,
                        const std::vector<double>& ys) {
  if (xs.size() != ys.size()) {
    throw shape_error("spearman: sequences differ in length");
  }
  const std::size_t m = xs.size();
  if (m < 4) throw shape_error("spearman: need at least 4 pairs");
  require_finite(xs, "spearman");
  require_finite(ys, "spearman");
  if (is_constant(xs) || is_constant(ys)) {
    throw degenerate_error("spearman: rank correlation of a constant sequence is undefined");
  }

  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  const double md = static_cast<double>(m);
  const double mean = 0.5 * (md + 1.0);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double dx = rx[i] - mean;
    const double dy = ry[i] - mean;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  double rho = sxy / std::sqrt(sxx * syy);
  rho = std::min(1.0, std::max(-1.0, rho));

  SpearmanResult result;
  result.rho = rho;
  if (rho == 1.0 || rho == -1.0) {
    result.p_value = 0.0;
  } else {
    const double t = rho * std::sqrt((md - 2.0) / (1.0 - rho * rho));
    result.p_value = student_t_two_sided(t, md - 2.0);
  }
  return result;
}

double delta_kl(double initial_kl, double final_kl) {
  if (!std::isfinite(initial_kl) || !std::isfinite(final_kl)) {
    throw degenerate_error("delta_kl: inputs must be finite");
  }
  if (!(initial_kl > 0.0)) {
    throw degenerate_error("delta_kl: initial divergence must be positive");
  }
  if (final_kl < 0.0) {
    throw degenerate_error("delta_kl: divergences are nonnegative");
  }
  return 100.0 * (final_kl - initial_kl) / initial_kl;
}

CorrelationResult correlation_experiment(const VictimBundle& bundle,
                                         std::size_t count,
                                         std::size_t points_per_dist,
                                         const AttackConfig& cfg,
                                         std::uint64_t seed) {
  if (count < 4) {
    throw degenerate_error("correlation_experiment: need at least 4 distributions");
  }
  if (points_per_dist < 10) {
    throw degenerate_error("correlation_experiment: need at least 10 points per distribution");
  }
  const std::size_t n = bundle.ref.mu_star.size();
  const std::size_t k = static_cast<std::size_t>(bundle.policy.output_dim());
  const auto ref_gauss =
      diagonal_estimate(bundle.ref.mu_star, bundle.ref.sigma_star);

  CorrelationResult result;
  result.records.reserve(count);
  std::vector<double> losses(count), kls(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::string tag = std::to_string(i);
    std::vector<double> z(n, 0.0);
    if (i > 0) {
      Rng zr(stream_seed(seed, "corr-z-" + tag));
      for (std::size_t j = 0; j < n; ++j) {
        const double magnitude = zr.uniform(0.0, 4.0);
        const double sign = zr.uniform01() < 0.5 ? -1.0 : 1.0;
        z[j] = sign * magnitude;
      }
    }
    std::vector<double> mu(n), sigma(n);
    for (std::size_t j = 0; j < n; ++j) {
      mu[j] = bundle.ref.mu_star[j] + z[j] * bundle.ref.sigma_star[j];
      sigma[j] = bundle.ref.sigma_star[j];
    }
    const auto probe = diagonal_estimate(mu, sigma);
    const auto data = self_query(bundle.policy, probe, points_per_dist,
                                 stream_seed(seed, "corr-query-" + tag));

    Rng init(stream_seed(seed, "corr-init-" + tag));
    auto imitator = make_mlp(analysis_net_dims(n, cfg.attacker_hidden, k),
                             cfg.hidden_activation, Activation::tanh, init);
    TrainConfig tc;
    tc.learning_rate = cfg.learning_rate;
    tc.batch_size = cfg.batch_size;
    tc.epochs = 1;
    tc.seed = stream_seed(seed, "corr-train-" + tag);
    const auto fit =
        behavioral_cloning(data, std::move(imitator), data.size(), tc);

    CorrelationRecord record;
    record.z = std::move(z);
    record.kl = kl_diag(ref_gauss, probe);
    record.eval_loss = fit.val_loss;
    losses[i] = record.eval_loss;
    kls[i] = record.kl;
    result.records.push_back(std::move(record));
  }

  const auto stat = spearman(losses, kls);
  result.rho = stat.rho;
  result.p_value = stat.p_value;
  return result;
}

std::vector<SweepPoint> robustness_sweep(const VictimBundle& bundle,
                                         const std::vector<double>& lambdas,
                                         const std::vector<double>& z_magnitudes,
                                         std::size_t queries_per_point,
                                         const AttackConfig& cfg,
                                         std::uint64_t seed) {
  for (double lambda : lambdas) {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) {
      throw degenerate_error("robustness_sweep: sigma scale factors must be positive");
    }
  }
  for (double z : z_magnitudes) {
    if (!std::isfinite(z)) {
      throw degenerate_error("robustness_sweep: shift magnitudes must be finite");
    }
  }
  if (queries_per_point < 10) {
    throw degenerate_error("robustness_sweep: need at least 10 queries per point");
  }
  const std::size_t n = bundle.ref.mu_star.size();

  AttackConfig point_cfg = cfg;
  point_cfg.budget.total = queries_per_point;
  point_cfg.budget.reserved = 0;
  point_cfg.budget.base = queries_per_point;
  point_cfg.budget.attacker = 0;
  point_cfg.seed = seed;

  std::vector<SweepPoint> points;
  points.reserve(lambdas.size() + z_magnitudes.size());
  for (double lambda : lambdas) {
    std::vector<double> sigma(n);
    for (std::size_t j = 0; j < n; ++j) {
      sigma[j] = lambda * bundle.ref.sigma_star[j];
    }
    const auto est = diagonal_estimate(bundle.ref.mu_star, sigma);
    const auto run = steal_with_distribution(bundle, false, est, point_cfg);
    points.push_back({SweepKind::sigma_scale, lambda, run.return_ratio, seed});
  }
  for (std::size_t idx = 0; idx < z_magnitudes.size(); ++idx) {
    const double z = z_magnitudes[idx];
    Rng signs(stream_seed(seed, "sweep-sign-" + std::to_string(idx)));
    std::vector<double> mu(n);
    for (std::size_t j = 0; j < n; ++j) {
      const double sign = signs.uniform01() < 0.5 ? -1.0 : 1.0;
      mu[j] = bundle.ref.mu_star[j] + sign * z * bundle.ref.sigma_star[j];
    }
    const auto est = diagonal_estimate(mu, bundle.ref.sigma_star);
    const auto run = steal_with_distribution(bundle, false, est, point_cfg);
    points.push_back({SweepKind::mu_shift, z, run.return_ratio, seed});
  }
  return points;
}

void save_correlation_csv(const std::string& path,
                          const std::vector<CorrelationRecord>& records) {
  std::ofstream out(path);
  if (!out) throw format_error("save_correlation_csv: cannot write " + path);
  const std::size_t n = records.empty() ? 0 : records.front().z.size();
  for (std::size_t j = 0; j < n; ++j) out << 'z' << j << ',';
  out << "kl,eval_loss\n";
  for (const auto& record : records) {
    for (double zj : record.z) out << fmt17(zj) << ',';
    out << fmt17(record.kl) << ',' << fmt17(record.eval_loss) << '\n';
  }
  if (!out) throw format_error("save_correlation_csv: write failed for " + path);
}

void save_sweep_csv(const std::string& path,
                    const std::vector<SweepPoint>& points) {
  std::ofstream out(path);
  if (!out) throw format_error("save_sweep_csv: cannot write " + path);
  out << "kind,value,rr,seed\n";
  for (const auto& point : points) {
    out << kind_name(point.kind) << ',' << fmt17(point.value) << ','
        << fmt17(point.rr) << ',' << point.seed << '\n';
  }
  if (!out) throw format_error("save_sweep_csv: write failed for " + path);
}

}  // namespace lab
