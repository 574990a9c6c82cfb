#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <vector>

#include "lab/dist.hpp"
#include "lab/errors.hpp"
#include "lab/nn.hpp"
#include "lab/rng.hpp"

using namespace lab;

TEST_CASE("sampling is deterministic given a seed") {
  const auto est = diagonal_estimate({0.5, -1.0}, {1.0, 2.0});
  const auto a = sample(est, 100, std::uint64_t{77});
  const auto b = sample(est, 100, std::uint64_t{77});
  REQUIRE(a.states == b.states);
  const auto c = sample(est, 100, std::uint64_t{78});
  CHECK(a.states != c.states);
}

TEST_CASE("sample shapes are count x dim") {
  const auto est = diagonal_estimate({0, 0, 0}, {1, 1, 1});
  const auto s = sample(est, 5, std::uint64_t{1});
  CHECK(s.dim == 3);
  CHECK(s.size() == 5);
  CHECK(s.states.size() == 15);
  CHECK_THROWS_AS(sample(est, 0, std::uint64_t{1}), degenerate_error);
}

TEST_CASE("diagonal sampling matches requested moments") {
  const auto est = diagonal_estimate({3.0, -2.0}, {2.0, 0.5});
  const std::size_t n = 1000000;
  const auto s = sample(est, n, std::uint64_t{123});
  double m0 = 0, m1 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    m0 += s.row(i)[0];
    m1 += s.row(i)[1];
  }
  m0 /= n;
  m1 /= n;
  // Standard-error bound: 4 sigma / sqrt(n).
  CHECK(std::abs(m0 - 3.0) < 4.0 * 2.0 / 1000.0);
  CHECK(std::abs(m1 + 2.0) < 4.0 * 0.5 / 1000.0);
  double v0 = 0, v1 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    v0 += (s.row(i)[0] - m0) * (s.row(i)[0] - m0);
    v1 += (s.row(i)[1] - m1) * (s.row(i)[1] - m1);
  }
  CHECK(std::sqrt(v0 / n) == doctest::Approx(2.0).epsilon(0.01));
  CHECK(std::sqrt(v1 / n) == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("full-family sampling reproduces the covariance") {
  const auto est = full_estimate({1.0, -1.0}, {4.0, 2.0, 2.0, 3.0});
  const std::size_t n = 200000;
  const auto s = sample(est, n, std::uint64_t{55});
  double m0 = 0, m1 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    m0 += s.row(i)[0];
    m1 += s.row(i)[1];
  }
  m0 /= n;
  m1 /= n;
  double c00 = 0, c01 = 0, c11 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d0 = s.row(i)[0] - m0;
    const double d1 = s.row(i)[1] - m1;
    c00 += d0 * d0;
    c01 += d0 * d1;
    c11 += d1 * d1;
  }
  CHECK(c00 / n == doctest::Approx(4.0).epsilon(0.03));
  CHECK(c01 / n == doctest::Approx(2.0).epsilon(0.05));
  CHECK(c11 / n == doctest::Approx(3.0).epsilon(0.03));
}

TEST_CASE("full-family sampling rejects a non-SPD covariance") {
  const auto est = full_estimate({0.0, 0.0}, {1.0, 2.0, 2.0, 1.0});
  CHECK_THROWS_AS(sample(est, 10, std::uint64_t{1}), degenerate_error);
}

TEST_CASE("kl_diag reference values") {
  const auto p = diagonal_estimate({0, 0, 0}, {1, 1, 1});
  CHECK(kl_diag(p, p) == 0.0);

  // A 3-sigma mean shift in every dimension gives exactly 4.5 regardless of n.
  for (int n : {1, 2, 4, 8}) {
    std::vector<double> mu(n, 0.0), sig(n), mu_q(n);
    for (int i = 0; i < n; ++i) {
      sig[i] = 0.5 + 0.25 * i;
      mu_q[i] = mu[i] + 3.0 * sig[i];
    }
    const auto pp = diagonal_estimate(mu, sig);
    const auto qq = diagonal_estimate(mu_q, sig);
    CHECK(kl_diag(pp, qq) == doctest::Approx(4.5).epsilon(1e-14));
  }

  // N(0,1) vs N(0, variance 4): ln 2 + 1/8 - 1/2.
  const auto a = diagonal_estimate({0.0}, {1.0});
  const auto b = diagonal_estimate({0.0}, {2.0});
  CHECK(kl_diag(a, b) == doctest::Approx(0.31814718055994531).epsilon(1e-14));

  const auto wide = diagonal_estimate({0, 0}, {1, 1});
  CHECK_THROWS_AS(kl_diag(a, wide), shape_error);
}

TEST_CASE("kl_diag is nonnegative and asymmetric over random draws") {
  Rng rng(404);
  for (int t = 0; t < 200; ++t) {
    const int n = 1 + static_cast<int>(rng.below(5));
    std::vector<double> mp(n), sp(n), mq(n), sq(n);
    for (int i = 0; i < n; ++i) {
      mp[i] = rng.uniform(-2, 2);
      mq[i] = rng.uniform(-2, 2);
      sp[i] = rng.uniform(0.3, 2.5);
      sq[i] = rng.uniform(0.3, 2.5);
    }
    const auto p = diagonal_estimate(mp, sp);
    const auto q = diagonal_estimate(mq, sq);
    CHECK(kl_diag(p, q) >= 0.0);
    CHECK(kl_diag(p, p) == 0.0);
  }
}

TEST_CASE("kl_diag is invariant under shared affine reparameterization") {
  Rng rng(405);
  for (int t = 0; t < 50; ++t) {
    const double shift = rng.uniform(-10, 10);
    const double scale = rng.uniform(0.1, 5.0);
    std::vector<double> mp{rng.uniform(-2, 2)}, sp{rng.uniform(0.3, 2.0)};
    std::vector<double> mq{rng.uniform(-2, 2)}, sq{rng.uniform(0.3, 2.0)};
    const double base = kl_diag(diagonal_estimate(mp, sp), diagonal_estimate(mq, sq));
    const auto p2 = diagonal_estimate({scale * mp[0] + shift}, {scale * sp[0]});
    const auto q2 = diagonal_estimate({scale * mq[0] + shift}, {scale * sq[0]});
    CHECK(kl_diag(p2, q2) == doctest::Approx(base).epsilon(1e-10));
  }
}

TEST_CASE("kl_diag agrees with a Monte Carlo estimate") {
  // E_p[log p - log q] estimated from samples of p, per dimension.
  const auto p = diagonal_estimate({0.7}, {1.3});
  const auto q = diagonal_estimate({-0.4}, {0.8});
  const double analytic = kl_diag(p, q);
  const auto s = sample(p, 200000, std::uint64_t{909});
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double x = s.row(i)[0];
    const double zp = (x - 0.7) / 1.3;
    const double zq = (x + 0.4) / 0.8;
    acc += (-std::log(1.3) - 0.5 * zp * zp) - (-std::log(0.8) - 0.5 * zq * zq);
  }
  CHECK(acc / s.size() == doctest::Approx(analytic).epsilon(0.02));
}

TEST_CASE("kl_full reference values and diagonal reduction") {
  const auto p = full_estimate({0, 0}, {1, 0, 0, 1});
  CHECK(kl_full(p, p) == doctest::Approx(0.0).epsilon(1e-14));

  const auto q = full_estimate({1, 0}, {1, 0, 0, 1});
  CHECK(kl_full(p, q) == doctest::Approx(0.25).epsilon(1e-14));

  Rng rng(406);
  for (int t = 0; t < 50; ++t) {
    const int n = 1 + static_cast<int>(rng.below(4));
    std::vector<double> mp(n), sp(n), mq(n), sq(n);
    for (int i = 0; i < n; ++i) {
      mp[i] = rng.uniform(-2, 2);
      mq[i] = rng.uniform(-2, 2);
      sp[i] = rng.uniform(0.3, 2.0);
      sq[i] = rng.uniform(0.3, 2.0);
    }
    const auto pd = diagonal_estimate(mp, sp);
    const auto qd = diagonal_estimate(mq, sq);
    CHECK(kl_full(pd, qd) == doctest::Approx(kl_diag(pd, qd)).epsilon(1e-12));
  }
}

TEST_CASE("kl_full rejects singular covariance") {
  const auto p = full_estimate({0, 0}, {1, 0, 0, 1});
  const auto q = full_estimate({0, 0}, {1, 1, 1, 1});
  CHECK_THROWS_AS(kl_full(p, q), degenerate_error);
}

TEST_CASE("fit_reference hand oracle") {
  StateSample s;
  s.dim = 1;
  s.states = {1.0, 2.0, 3.0};
  const auto stats = fit_reference(s);
  CHECK(stats.mu_star[0] == 2.0);
  CHECK(stats.sigma_star[0] == doctest::Approx(0.81649658092772603).epsilon(1e-15));
  CHECK(stats.lo[0] == 1.0);
  CHECK(stats.hi[0] == 3.0);
  CHECK(stats.sample_count == 3);
}

TEST_CASE("fit_reference rejects degenerate corpora") {
  StateSample one;
  one.dim = 1;
  one.states = {1.0};
  CHECK_THROWS_AS(fit_reference(one), degenerate_error);
  StateSample flat;
  flat.dim = 2;
  flat.states = {1.0, 5.0, 1.0, 7.0, 1.0, 6.0};  // first dim constant
  CHECK_THROWS_AS(fit_reference(flat), degenerate_error);
}

TEST_CASE("fit_reference recovers generator parameters statistically") {
  const auto est = diagonal_estimate({5.0}, {2.0});
  const auto s = sample(est, 100000, std::uint64_t{321});
  const auto stats = fit_reference(s);
  CHECK(std::abs(stats.mu_star[0] - 5.0) < 0.03);
  CHECK(std::abs(stats.sigma_star[0] - 2.0) < 0.03);
  CHECK(stats.lo[0] < 5.0 - 6.0);
  CHECK(stats.hi[0] > 5.0 + 6.0);
}

TEST_CASE("reference stats round-trip through the text record") {
  StateSample s;
  s.dim = 2;
  Rng rng(31);
  for (int i = 0; i < 100; ++i) {
    s.states.push_back(rng.normal(1.0 / 3.0, 0.1));
    s.states.push_back(rng.normal(-7.0, 2.0));
  }
  const auto stats = fit_reference(s);
  const std::string path = "dist_reference_roundtrip.txt";
  save_reference(stats, path);
  const auto back = load_reference(path);
  CHECK(back.sample_count == stats.sample_count);
  REQUIRE(back.dim() == 2);
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(back.mu_star[j] == stats.mu_star[j]);
    CHECK(back.sigma_star[j] == stats.sigma_star[j]);
    CHECK(back.lo[j] == stats.lo[j]);
    CHECK(back.hi[j] == stats.hi[j]);
  }
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_reference("no_such_reference_file.txt"), format_error);
}

TEST_CASE("proxy reward reference values") {
  MlpModel half;  // constant output 0.5
  half.layer_dims = {2, 1};
  half.weights = {{0, 0}};
  half.biases = {{0}};
  half.output_activation = Activation::sigmoid;
  CHECK(proxy_reward(half, {0.0}, {0.0}) ==
        doctest::Approx(0.69314718055994531).epsilon(1e-15));

  MlpModel exact;  // identity head emitting e^{-3} directly
  exact.layer_dims = {2, 1};
  exact.weights = {{0, 0}};
  exact.biases = {{std::exp(-3.0)}};
  exact.output_activation = Activation::identity;
  CHECK(proxy_reward(exact, {0.0}, {0.0}) == doctest::Approx(3.0).epsilon(1e-12));

  MlpModel sure;  // saturated discriminator, clamped before the log
  sure.layer_dims = {2, 1};
  sure.weights = {{0, 0}};
  sure.biases = {{50.0}};
  sure.output_activation = Activation::sigmoid;
  const double r = proxy_reward(sure, {0.0}, {0.0});
  CHECK(r >= 0.0);
  CHECK(r < 1e-6);
}

TEST_CASE("proxy reward decreases as the discriminator output rises") {
  double prev = std::numeric_limits<double>::infinity();
  for (double bias : {-4.0, -1.0, 0.0, 1.0, 4.0}) {
    MlpModel m;
    m.layer_dims = {2, 1};
    m.weights = {{0, 0}};
    m.biases = {{bias}};
    m.output_activation = Activation::sigmoid;
    const double r = proxy_reward(m, {0.0}, {0.0});
    CHECK(r < prev);
    prev = r;
  }
}

TEST_CASE("dist_refine worked example") {
  TransferDataset d;
  d.state_dim = 1;
  d.action_dim = 1;
  d.states = {1.0, 3.0};
  d.actions = {0.0, 0.0};
  const auto res = dist_refine(d, {1.0, 3.0});
  CHECK(res.mu[0] == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(res.sigma[0] == doctest::Approx(0.86602540378443865).epsilon(1e-15));
  CHECK_FALSE(res.degenerate);
}

TEST_CASE("dist_refine with uniform weights reduces to plain statistics") {
  TransferDataset d;
  d.state_dim = 1;
  d.action_dim = 1;
  d.states = {1.0, 2.0, 3.0, 4.0};
  d.actions = {0, 0, 0, 0};
  const auto res = dist_refine(d, {2.0, 2.0, 2.0, 2.0});
  CHECK(res.mu[0] == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(res.sigma[0] == doctest::Approx(std::sqrt(1.25)).epsilon(1e-15));
}

TEST_CASE("dist_refine flags a collapsed estimate") {
  TransferDataset d;
  d.state_dim = 2;
  d.action_dim = 1;
  d.states = {1.5, -2.0};
  d.actions = {0.0};
  const auto res = dist_refine(d, {1.0});
  CHECK(res.mu[0] == 1.5);
  CHECK(res.mu[1] == -2.0);
  CHECK(res.sigma[0] == kSigmaFloor);
  CHECK(res.sigma[1] == kSigmaFloor);
  CHECK(res.degenerate);
}

TEST_CASE("dist_refine matches a brute-force accumulation") {
  Rng rng(808);
  TransferDataset d;
  d.state_dim = 3;
  d.action_dim = 1;
  const std::size_t count = 50;
  std::vector<double> w(count);
  for (std::size_t i = 0; i < count; ++i) {
    for (int j = 0; j < 3; ++j) d.states.push_back(rng.uniform(-5, 5));
    d.actions.push_back(0.0);
    w[i] = rng.uniform(0.01, 3.0);
  }
  const auto res = dist_refine(d, w);
  for (int j = 0; j < 3; ++j) {
    double wsum = 0, mean = 0;
    for (std::size_t i = 0; i < count; ++i) {
      wsum += w[i];
      mean += w[i] * d.states[i * 3 + j];
    }
    mean /= wsum;
    double var = 0;
    for (std::size_t i = 0; i < count; ++i) {
      const double diff = d.states[i * 3 + j] - mean;
      var += w[i] * diff * diff;
    }
    var /= wsum;
    CHECK(res.mu[j] == doctest::Approx(mean).epsilon(1e-12));
    CHECK(res.sigma[j] == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
  }
}

TEST_CASE("dist_refine input validation") {
  TransferDataset d;
  d.state_dim = 1;
  d.action_dim = 1;
  d.states = {1.0, 2.0};
  d.actions = {0.0, 0.0};
  CHECK_THROWS_AS(dist_refine(d, {1.0}), shape_error);
  CHECK_THROWS_AS(dist_refine(d, {0.0, 0.0}), degenerate_error);
  TransferDataset empty;
  empty.state_dim = 1;
  empty.action_dim = 1;
  CHECK_THROWS_AS(dist_refine(empty, {}), degenerate_error);
}
