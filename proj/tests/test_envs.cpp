#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <vector>

#include "lab/envs.hpp"
#include "lab/errors.hpp"
#include "lab/rng.hpp"

using namespace lab;

namespace {

EnvSpec tiny_linear(double dt, int horizon) {
  EnvSpec spec;
  spec.name = EnvName::linear_reach;
  spec.state_dim = 1;
  spec.action_dim = 1;
  spec.dt = dt;
  spec.horizon = horizon;
  spec.encode_scale = {1.0};
  spec.encode_offset = {0.0};
  spec.init_low = {0.0};
  spec.init_high = {1.0};
  return spec;
}

EnvSpec tiny_spring() {
  EnvSpec spec;
  spec.name = EnvName::damped_spring;
  spec.state_dim = 2;
  spec.action_dim = 1;
  spec.dt = 0.1;
  spec.horizon = 10;
  spec.encode_scale = {1.0, 1.0};
  spec.encode_offset = {0.0, 0.0};
  spec.init_low = {-1.0, -0.5};
  spec.init_high = {1.0, 0.5};
  return spec;
}

}  // namespace

TEST_CASE("environment names round-trip") {
  CHECK(env_from_name(env_name(EnvName::linear_reach)) == EnvName::linear_reach);
  CHECK(env_from_name(env_name(EnvName::damped_spring)) == EnvName::damped_spring);
  CHECK_THROWS_AS(env_from_name("pendulum"), format_error);
}

TEST_CASE("default specs satisfy their own invariants") {
  CHECK_NOTHROW(validate_env(linear_reach_spec()));
  CHECK_NOTHROW(validate_env(damped_spring_spec()));
}

TEST_CASE("spec validation rejects malformed instances") {
  auto spec = tiny_linear(0.1, 5);
  spec.encode_scale = {0.0};
  CHECK_THROWS_AS(validate_env(spec), degenerate_error);

  spec = tiny_linear(0.1, 5);
  spec.init_low = {2.0};  // above init_high
  CHECK_THROWS_AS(validate_env(spec), degenerate_error);

  spec = tiny_linear(0.1, 5);
  spec.action_dim = 2;
  CHECK_THROWS_AS(validate_env(spec), shape_error);

  spec = tiny_linear(-0.1, 5);
  CHECK_THROWS_AS(validate_env(spec), degenerate_error);

  auto spring = tiny_spring();
  spring.action_dim = 2;  // state_dim must be twice action_dim
  CHECK_THROWS_AS(validate_env(spring), shape_error);
}

TEST_CASE("encode/decode are inverse affine maps") {
  const auto spec = linear_reach_spec();
  const std::vector<double> latent{0.5, -0.25, 1.5, 0.125};
  const auto enc = encode_state(spec, latent);
  const auto back = decode_state(spec, enc);
  for (std::size_t i = 0; i < latent.size(); ++i) {
    CHECK(back[i] == doctest::Approx(latent[i]).epsilon(1e-12));
  }
}

TEST_CASE("linear_reach step hand oracle") {
  const auto spec = tiny_linear(0.1, 5);
  const auto [next, reward] = env_step(spec, {1.0}, {-1.0});
  CHECK(next[0] == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(reward == doctest::Approx(-0.9).epsilon(1e-15));
}

TEST_CASE("linear_reach origin is a fixed point") {
  const auto spec = tiny_linear(0.1, 5);
  const auto [next, reward] = env_step(spec, {0.0}, {0.0});
  CHECK(next[0] == 0.0);
  CHECK(reward == 0.0);
}

TEST_CASE("actions are clipped to the unit box") {
  const auto spec = tiny_linear(0.1, 5);
  const auto [a, ra] = env_step(spec, {1.0}, {-5.0});
  const auto [b, rb] = env_step(spec, {1.0}, {-1.0});
  CHECK(a[0] == b[0]);
  CHECK(ra == rb);
}

TEST_CASE("damped_spring step hand oracle") {
  const auto spec = tiny_spring();
  // v' = 0 + 0.1 (0.5 - 1 - 0) = -0.05; x' = 1 - 0.005 = 0.995
  const auto [next, reward] = env_step(spec, {1.0, 0.0}, {0.5});
  CHECK(next[0] == doctest::Approx(0.995).epsilon(1e-15));
  CHECK(next[1] == doctest::Approx(-0.05).epsilon(1e-15));
  CHECK(reward == doctest::Approx(-1.015025).epsilon(1e-14));
}

TEST_CASE("latent dynamics are independent of the sensor encoding") {
  auto plain = tiny_linear(0.2, 5);
  auto coded = plain;
  coded.encode_scale = {100.0};
  coded.encode_offset = {-5.0};

  const std::vector<double> x0{0.8};
  const std::vector<std::vector<double>> actions{{-1.0}, {0.5}, {0.25}, {-0.125}};
  auto sa = encode_state(plain, x0);
  auto sb = encode_state(coded, x0);
  for (const auto& a : actions) {
    auto [na, ra] = env_step(plain, sa, a);
    auto [nb, rb] = env_step(coded, sb, a);
    const auto la = decode_state(plain, na);
    const auto lb = decode_state(coded, nb);
    CHECK(lb[0] == doctest::Approx(la[0]).epsilon(1e-12));
    CHECK(rb == doctest::Approx(ra).epsilon(1e-12));
    sa = na;
    sb = nb;
  }
}

TEST_CASE("expert action oracles") {
  const auto lin = tiny_linear(0.1, 5);
  CHECK(expert_action(lin, {1.0})[0] == -1.0);
  CHECK(expert_action(lin, {0.0})[0] == 0.0);
  CHECK(expert_action(lin, {-0.05})[0] == doctest::Approx(0.5).epsilon(1e-15));

  const auto spr = tiny_spring();  // gains 1.2, 1.5
  CHECK(expert_action(spr, {1.0, 0.0})[0] == -1.0);  // clip(-1.2)
  CHECK(expert_action(spr, {0.2, -0.4})[0] == doctest::Approx(0.36).epsilon(1e-15));
  CHECK(expert_action(spr, {0.0, 0.0})[0] == 0.0);
}

TEST_CASE("zero policy on linear_reach leaves the state frozen") {
  const auto spec = tiny_linear(0.1, 7);
  auto s = encode_state(spec, {0.8});
  double total = 0.0;
  for (int t = 0; t < spec.horizon; ++t) {
    auto [next, reward] = env_step(spec, s, {0.0});
    total += reward;
    s = std::move(next);
  }
  CHECK(total == doctest::Approx(-7.0 * 0.8).epsilon(1e-13));
}

TEST_CASE("rollout is deterministic and shape-consistent") {
  const auto spec = linear_reach_spec();
  const Policy zero = [](const std::vector<double>&) {
    return std::vector<double>(4, 0.0);
  };
  const auto a = rollout(spec, zero, 8, 99);
  const auto b = rollout(spec, zero, 8, 99);
  CHECK(a.mean_return == b.mean_return);
  REQUIRE(a.trajectories.size() == 8);
  for (const auto& t : a.trajectories) {
    CHECK(t.states.size() == static_cast<std::size_t>(spec.horizon) + 1);
    CHECK(t.actions.size() == static_cast<std::size_t>(spec.horizon));
    CHECK(t.rewards.size() == static_cast<std::size_t>(spec.horizon));
    double sum = 0.0;
    for (double r : t.rewards) sum += r;
    CHECK(t.total_return == doctest::Approx(sum).epsilon(1e-12));
  }
  const auto c = rollout(spec, zero, 8, 100);
  CHECK(a.mean_return != c.mean_return);
}

TEST_CASE("rollout rejects policies with the wrong action length") {
  const auto spec = linear_reach_spec();
  const Policy bad = [](const std::vector<double>&) {
    return std::vector<double>(2, 0.0);
  };
  CHECK_THROWS_AS(rollout(spec, bad, 1, 1), shape_error);
}

TEST_CASE("expert dominates zero and random policies on both environments") {
  for (const auto& spec : {linear_reach_spec(), damped_spring_spec()}) {
    const std::size_t k = static_cast<std::size_t>(spec.action_dim);
    const Policy expert = [&spec](const std::vector<double>& s) {
      return expert_action(spec, s);
    };
    const Policy zero = [k](const std::vector<double>&) {
      return std::vector<double>(k, 0.0);
    };
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      auto noise = std::make_shared<Rng>(stream_seed(seed, "random-policy"));
      const Policy random = [k, noise](const std::vector<double>&) {
        std::vector<double> a(k);
        for (double& v : a) v = noise->uniform(-1.0, 1.0);
        return a;
      };
      const double re = rollout(spec, expert, 8, seed).mean_return;
      const double rz = rollout(spec, zero, 8, seed).mean_return;
      const double rr = rollout(spec, random, 8, seed).mean_return;
      CHECK(re > rz);
      CHECK(re > rr);
    }
  }
}

TEST_CASE("rewards are non-positive on both environments") {
  for (const auto& spec : {linear_reach_spec(), damped_spring_spec()}) {
    auto noise = std::make_shared<Rng>(17);
    const std::size_t k = static_cast<std::size_t>(spec.action_dim);
    const Policy random = [k, noise](const std::vector<double>&) {
      std::vector<double> a(k);
      for (double& v : a) v = noise->uniform(-1.0, 1.0);
      return a;
    };
    const auto res = rollout(spec, random, 10, 3);
    for (const auto& t : res.trajectories) {
      for (double r : t.rewards) CHECK(r <= 0.0);
    }
  }
}

TEST_CASE("return ratio reference values") {
  CHECK(return_ratio(3500.0, 3593.0, std::nullopt) ==
        doctest::Approx(0.97411633732257167).epsilon(1e-15));
  CHECK(return_ratio(7.0, 7.0, std::nullopt) == 1.0);
  CHECK(return_ratio(7.0, 7.0, -50.0) == 1.0);
  CHECK(return_ratio(-25.0, 0.0, -50.0) == 0.5);
  CHECK_THROWS_AS(return_ratio(1.0, 0.0, std::nullopt), degenerate_error);
  CHECK_THROWS_AS(return_ratio(1.0, -50.0, -50.0), degenerate_error);
}

TEST_CASE("pinned return floors match the measurement procedure") {
  CHECK(measure_r_min(linear_reach_spec(), 100, 2024) == kLinearReachRMin);
  CHECK(measure_r_min(damped_spring_spec(), 100, 2024) == kDampedSpringRMin);
  // The floors sit strictly below what the experts achieve.
  const auto lin = linear_reach_spec();
  const auto spr = damped_spring_spec();
  const Policy le = [&lin](const std::vector<double>& s) { return expert_action(lin, s); };
  const Policy se = [&spr](const std::vector<double>& s) { return expert_action(spr, s); };
  CHECK(rollout(lin, le, 20, 5).mean_return > kLinearReachRMin);
  CHECK(rollout(spr, se, 20, 5).mean_return > kDampedSpringRMin);
}

TEST_CASE("trajectory CSV export") {
  const auto spec = tiny_spring();
  const Policy zero = [](const std::vector<double>&) {
    return std::vector<double>(1, 0.0);
  };
  const auto res = rollout(spec, zero, 3, 21);
  const std::string path = "envs_traj_export.csv";
  save_trajectories_csv(res.trajectories, path);

  std::ifstream in(path);
  REQUIRE(in.good());
  std::string header;
  std::getline(in, header);
  CHECK(header == "episode,t,s_0,s_1,a_0,reward");
  std::size_t rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == 3 * 10);
  std::remove(path.c_str());
}
