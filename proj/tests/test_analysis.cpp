#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lab/analysis.hpp"
#include "lab/attack.hpp"
#include "lab/envs.hpp"
#include "lab/errors.hpp"
#include "lab/victim.hpp"

using namespace lab;

namespace {

EnvSpec tiny_env(int dims) {
  EnvSpec spec;
  spec.name = EnvName::linear_reach;
  spec.state_dim = dims;
  spec.action_dim = dims;
  spec.dt = 0.45;
  spec.horizon = 3;
  spec.encode_scale.assign(dims, 1.0);
  spec.encode_offset.assign(dims, 0.0);
  spec.init_low.assign(dims, 0.3);
  spec.init_high.assign(dims, 1.0);
  spec.r_min = measure_r_min(spec, 50, 11);
  return spec;
}

const VictimBundle& tiny_victim(int dims) {
  static std::vector<VictimBundle> cache(3);
  static std::vector<bool> built(3, false);
  auto& slot = cache[static_cast<std::size_t>(dims)];
  if (!built[static_cast<std::size_t>(dims)]) {
    VictimBuildExtras extras;
    extras.hidden = {32};
    extras.min_visited = 1000;
    TrainConfig cfg;
    cfg.epochs = 400;
    cfg.batch_size = 256;
    slot = train_victim(tiny_env(dims), 300, cfg, 42, extras);
    built[static_cast<std::size_t>(dims)] = true;
  }
  return slot;
}

MlpModel constant_policy(double value) {
  MlpModel m;
  m.layer_dims = {1, 1};
  m.weights = {{0.0}};
  m.biases = {{value}};
  m.output_activation = Activation::identity;
  return m;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("spearman matches hand-computed rank formulas") {
  // d^2 sum 10 over 4 pairs: 1 - 60/60 = 0 exactly.
  const auto zero = spearman({1, 2, 3, 4}, {3, 1, 4, 2});
  CHECK(zero.rho == 0.0);
  CHECK(zero.p_value == 1.0);

  // d^2 sum 4 over 5 pairs: 1 - 24/120 = 0.8; two-sided t tail at
  // t = 0.8*sqrt(3/0.36) = 2.3094010767585031 with 3 degrees of freedom,
  // cross-checked at 30-digit precision.
  const auto partial = spearman({1, 2, 3, 4, 5}, {2, 1, 4, 3, 5});
  CHECK(partial.rho == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(partial.p_value ==
        doctest::Approx(0.10408803866182786).epsilon(1e-12));

  const auto perfect = spearman({1, 2, 3, 5}, {2, 4, 8, 9});
  CHECK(perfect.rho == 1.0);
  CHECK(perfect.p_value == 0.0);

  const auto reversed = spearman({1, 2, 3, 4, 5}, {-2, -1, -4, -3, -5});
  CHECK(reversed.rho == doctest::Approx(-0.8).epsilon(1e-14));
}

TEST_CASE("spearman averages tied ranks") {
  // x-ranks become {1, 2.5, 2.5, 4}; Pearson on ranks gives 3/sqrt(10).
  const auto tied = spearman({1, 2, 2, 3}, {1, 2, 3, 4});
  CHECK(tied.rho == doctest::Approx(0.9486832980505138).epsilon(1e-14));
  CHECK(tied.p_value == doctest::Approx(0.0513167019494862).epsilon(1e-12));
  // With 2 degrees of freedom the tail has the closed form 1 - rho.
  CHECK(tied.p_value == doctest::Approx(1.0 - tied.rho).epsilon(1e-12));
}

TEST_CASE("spearman only sees ranks") {
  const std::vector<double> xs = {0.3, 1.7, 0.9, 4.2, 2.8, 0.1};
  const std::vector<double> ys = {5.0, 2.0, 9.0, 1.0, 7.0, 3.0};
  std::vector<double> cubed(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) cubed[i] = xs[i] * xs[i] * xs[i];
  const auto base = spearman(xs, ys);
  const auto transformed = spearman(cubed, ys);
  CHECK(base.rho == transformed.rho);
  CHECK(base.p_value == transformed.p_value);
}

TEST_CASE("spearman input validation") {
  CHECK_THROWS_AS(spearman({1, 2, 3}, {1, 2, 3}), shape_error);
  CHECK_THROWS_AS(spearman({1, 2, 3, 4}, {1, 2, 3}), shape_error);
  CHECK_THROWS_AS(spearman({2, 2, 2, 2}, {1, 2, 3, 4}), degenerate_error);
  CHECK_THROWS_AS(spearman({1, 2, 3, 4}, {5, 5, 5, 5}), degenerate_error);
  const double nan = std::nan("");
  CHECK_THROWS_AS(spearman({1, 2, nan, 4}, {1, 2, 3, 4}), numeric_error);
}

TEST_CASE("student t two-sided tail matches closed forms") {
  // df = 1: 1 - 2*atan(t)/pi; at t = 1 exactly one half.
  CHECK(student_t_two_sided(1.0, 1.0) == doctest::Approx(0.5).epsilon(1e-12));
  // df = 2: 1 - t/sqrt(2 + t^2); at t = sqrt(2) this is 1 - sqrt(1/2).
  CHECK(student_t_two_sided(std::sqrt(2.0), 2.0) ==
        doctest::Approx(1.0 - std::sqrt(0.5)).epsilon(1e-12));
  CHECK(student_t_two_sided(0.0, 17.0) == 1.0);
  // High-df value cross-checked at 30-digit precision.
  CHECK(student_t_two_sided(1.96, 1000.0) ==
        doctest::Approx(0.050273184955748714).epsilon(1e-10));
  CHECK(student_t_two_sided(-2.5, 7.0) == student_t_two_sided(2.5, 7.0));
  CHECK(student_t_two_sided(3.0, 7.0) < student_t_two_sided(1.0, 7.0));
  CHECK_THROWS_AS(student_t_two_sided(1.0, 0.0), degenerate_error);
  CHECK_THROWS_AS(student_t_two_sided(1.0, -2.0), degenerate_error);
}

TEST_CASE("delta_kl formula and guards") {
  CHECK(delta_kl(2.68, 0.51) ==
        doctest::Approx(-80.97014925373134).epsilon(1e-12));
  CHECK(delta_kl(1.37, 1.37) == 0.0);
  CHECK(delta_kl(1.0, 1.06) == doctest::Approx(6.0).epsilon(1e-12));
  CHECK(delta_kl(1.0, 1.06) > 0.0);
  // Scale-free: common factors cancel.
  CHECK(delta_kl(0.7, 0.2) == doctest::Approx(delta_kl(3.5, 1.0)).epsilon(1e-12));
  CHECK_THROWS_AS(delta_kl(0.0, 1.0), degenerate_error);
  CHECK_THROWS_AS(delta_kl(-1.0, 1.0), degenerate_error);
  CHECK_THROWS_AS(delta_kl(1.0, -0.3), degenerate_error);
  CHECK_THROWS_AS(delta_kl(std::nan(""), 1.0), degenerate_error);
}

TEST_CASE("correlation experiment structure on a tiny victim") {
  const auto& bundle = tiny_victim(1);
  AttackConfig cfg;
  cfg.attacker_hidden = {8};
  cfg.learning_rate = 3e-3;
  cfg.batch_size = 16;

  const auto run = correlation_experiment(bundle, 25, 400, cfg, 5);
  REQUIRE(run.records.size() == 25);
  CHECK(run.records[0].z == std::vector<double>{0.0});
  CHECK(run.records[0].kl == 0.0);
  for (std::size_t i = 0; i < run.records.size(); ++i) {
    const auto& record = run.records[i];
    CHECK(std::isfinite(record.kl));
    CHECK(record.kl >= 0.0);
    if (i > 0) CHECK(record.kl > 0.0);
    CHECK(std::isfinite(record.eval_loss));
    CHECK(record.eval_loss >= 0.0);
    for (double zj : record.z) CHECK(std::fabs(zj) <= 4.0);
  }

  const auto again = correlation_experiment(bundle, 25, 400, cfg, 5);
  CHECK(again.rho == run.rho);
  CHECK(again.p_value == run.p_value);
  CHECK(again.records[7].kl == run.records[7].kl);
  CHECK(again.records[7].eval_loss == run.records[7].eval_loss);

  const auto other = correlation_experiment(bundle, 25, 400, cfg, 6);
  CHECK(other.rho != run.rho);

  CHECK_THROWS_AS(correlation_experiment(bundle, 3, 400, cfg, 5),
                  degenerate_error);
  CHECK_THROWS_AS(correlation_experiment(bundle, 25, 5, cfg, 5),
                  degenerate_error);
}

TEST_CASE("correlation experiment finds the difficulty-distance relation") {
  // Imitation difficulty (one-epoch validation loss) should fall as the
  // probe distribution drifts off-support, i.e. loss and KL anticorrelate.
  const auto& bundle = tiny_victim(2);
  AttackConfig cfg;
  cfg.attacker_hidden = {4};
  cfg.learning_rate = 3e-3;
  cfg.batch_size = 16;

  const auto run = correlation_experiment(bundle, 80, 24000, cfg, 11);
  CHECK(run.rho < -0.2);
  CHECK(run.p_value < 0.05);
}

TEST_CASE("correlation experiment on a constant victim shows no relation") {
  VictimBundle bundle;
  bundle.policy = constant_policy(0.3);
  bundle.ref.mu_star = {0.0};
  bundle.ref.sigma_star = {1.0};
  bundle.ref.lo = {-5.0};
  bundle.ref.hi = {5.0};
  bundle.ref.sample_count = 100;
  bundle.cov_star = {1.0};
  bundle.env = tiny_env(1);

  AttackConfig cfg;
  cfg.attacker_hidden = {4};
  cfg.learning_rate = 1e-3;
  cfg.batch_size = 32;

  const auto run = correlation_experiment(bundle, 100, 200, cfg, 3);
  CHECK(std::fabs(run.rho) < 0.25);
  CHECK(run.p_value > 0.01);
}

TEST_CASE("robustness sweep structure and the exposure identity") {
  const auto& bundle = tiny_victim(1);
  AttackConfig cfg;
  cfg.attacker_hidden = {16};
  cfg.batch_size = 64;
  cfg.final_train.epochs = 40;
  cfg.final_train.early_stop_patience = 5;
  cfg.final_train.batch_size = 64;
  cfg.eval_episodes = 4;

  const std::vector<double> lambdas = {1.0, 0.5};
  const std::vector<double> zs = {0.0, 2.0};
  const auto points = robustness_sweep(bundle, lambdas, zs, 600, cfg, 9);
  REQUIRE(points.size() == 4);
  CHECK(points[0].kind == SweepKind::sigma_scale);
  CHECK(points[0].value == 1.0);
  CHECK(points[1].kind == SweepKind::sigma_scale);
  CHECK(points[1].value == 0.5);
  CHECK(points[2].kind == SweepKind::mu_shift);
  CHECK(points[2].value == 0.0);
  CHECK(points[3].kind == SweepKind::mu_shift);
  CHECK(points[3].value == 2.0);
  for (const auto& point : points) {
    CHECK(std::isfinite(point.rr));
    CHECK(point.seed == 9);
  }

  // lambda = 1 and z = 0 probe the identical distribution: bit-equal runs.
  CHECK(points[0].rr == points[2].rr);

  // ... and both coincide with stealing at the exposed reference fit.
  auto reffit_cfg = cfg;
  reffit_cfg.budget.total = 600;
  reffit_cfg.budget.reserved = 0;
  reffit_cfg.budget.base = 600;
  reffit_cfg.budget.attacker = 0;
  reffit_cfg.seed = 9;
  const auto exposed =
      reference_fit_steal(bundle, false, GaussianFamily::diagonal, reffit_cfg);
  CHECK(exposed.return_ratio == points[0].rr);

  const auto again = robustness_sweep(bundle, lambdas, zs, 600, cfg, 9);
  for (std::size_t i = 0; i < points.size(); ++i) {
    CHECK(again[i].rr == points[i].rr);
  }

  CHECK_THROWS_AS(robustness_sweep(bundle, {0.0}, {}, 600, cfg, 9),
                  degenerate_error);
  CHECK_THROWS_AS(robustness_sweep(bundle, {-1.0}, {}, 600, cfg, 9),
                  degenerate_error);
  CHECK_THROWS_AS(robustness_sweep(bundle, {1.0}, {}, 4, cfg, 9),
                  degenerate_error);
}

TEST_CASE("analysis csv writers") {
  std::vector<CorrelationRecord> records;
  records.push_back({{0.0, 0.0}, 0.0, 0.25});
  records.push_back({{1.5, -2.0}, 2.125, 0.0078125});
  const std::string corr_path = "test_correlation_tmp.csv";
  save_correlation_csv(corr_path, records);
  const auto corr = slurp(corr_path);
  std::istringstream corr_lines(corr);
  std::string line;
  REQUIRE(std::getline(corr_lines, line));
  CHECK(line == "z0,z1,kl,eval_loss");
  REQUIRE(std::getline(corr_lines, line));
  CHECK(line == "0,0,0,0.25");
  REQUIRE(std::getline(corr_lines, line));
  CHECK(line == "1.5,-2,2.125,0.0078125");
  CHECK(!std::getline(corr_lines, line));
  std::remove(corr_path.c_str());

  std::vector<SweepPoint> points;
  points.push_back({SweepKind::sigma_scale, 0.5, 0.875, 9});
  points.push_back({SweepKind::mu_shift, 3.0, -0.0625, 9});
  const std::string sweep_path = "test_sweep_tmp.csv";
  save_sweep_csv(sweep_path, points);
  const auto sweep = slurp(sweep_path);
  std::istringstream sweep_lines(sweep);
  REQUIRE(std::getline(sweep_lines, line));
  CHECK(line == "kind,value,rr,seed");
  REQUIRE(std::getline(sweep_lines, line));
  CHECK(line == "sigma_scale,0.5,0.875,9");
  REQUIRE(std::getline(sweep_lines, line));
  CHECK(line == "mu_shift,3,-0.0625,9");
  CHECK(!std::getline(sweep_lines, line));
  std::remove(sweep_path.c_str());
}
