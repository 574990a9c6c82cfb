#include "lab/envs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "lab/errors.hpp"
#include "lab/rng.hpp"
#include "lab/textio.hpp"

namespace lab {

namespace {

void check_state_dim(const EnvSpec& spec, const std::vector<double>& state) {
  if (state.size() != static_cast<std::size_t>(spec.state_dim)) {
    throw shape_error("env: state length " + std::to_string(state.size()) +
                      " does not match state_dim " +
                      std::to_string(spec.state_dim));
  }
}

double clip1(double a) { return std::clamp(a, -1.0, 1.0); }

}  // namespace

const char* env_name(EnvName name) {
  switch (name) {
    case EnvName::linear_reach: return "linear_reach";
    case EnvName::damped_spring: return "damped_spring";
  }
  return "linear_reach";
}

EnvName env_from_name(const std::string& name) {
  if (name == "linear_reach") return EnvName::linear_reach;
  if (name == "damped_spring") return EnvName::damped_spring;
  throw format_error("unknown environment name: " + name);
}

EnvSpec linear_reach_spec() {
  EnvSpec spec;
  spec.name = EnvName::linear_reach;
  spec.state_dim = 4;
  spec.action_dim = 4;
  spec.dt = 0.45;
  spec.horizon = 3;
  spec.encode_scale = {0.005, 0.1, 2.0, 50.0};
  spec.encode_offset = {0.4, -2.0, 5.0, -40.0};
  spec.init_low = {0.3, 0.3, 0.3, 0.3};
  spec.init_high = {1.0, 1.0, 1.0, 1.0};
  spec.r_min = kLinearReachRMin;
  return spec;
}

EnvSpec damped_spring_spec() {
  EnvSpec spec;
  spec.name = EnvName::damped_spring;
  spec.state_dim = 8;
  spec.action_dim = 4;
  spec.dt = 0.15;
  spec.horizon = 20;
  spec.encode_scale = {0.01, 0.02, 0.5, 1.0, 10.0, 20.0, 200.0, 400.0};
  spec.encode_offset = {1.0, 0.0, -3.0, 0.5, 20.0, -8.0, -500.0, 100.0};
  spec.init_low = {0.3, -0.2, 0.3, -0.2, 0.3, -0.2, 0.3, -0.2};
  spec.init_high = {1.0, 0.2, 1.0, 0.2, 1.0, 0.2, 1.0, 0.2};
  spec.r_min = kDampedSpringRMin;
  return spec;
}

void validate_env(const EnvSpec& spec) {
  if (spec.state_dim <= 0 || spec.action_dim <= 0) {
    throw shape_error("env: dimensions must be positive");
  }
  const auto n = static_cast<std::size_t>(spec.state_dim);
  if (spec.name == EnvName::linear_reach && spec.action_dim != spec.state_dim) {
    throw shape_error("linear_reach: action_dim must equal state_dim");
  }
  if (spec.name == EnvName::damped_spring &&
      (spec.state_dim % 2 != 0 || spec.action_dim * 2 != spec.state_dim)) {
    throw shape_error("damped_spring: state_dim must be 2 * action_dim");
  }
  if (spec.encode_scale.size() != n || spec.encode_offset.size() != n ||
      spec.init_low.size() != n || spec.init_high.size() != n) {
    throw shape_error("env: encode/init vectors must have state_dim entries");
  }
  for (double s : spec.encode_scale) {
    if (s == 0.0) throw degenerate_error("env: encode_scale components must be nonzero");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(spec.init_low[i] < spec.init_high[i])) {
      throw degenerate_error("env: init_low must be strictly below init_high");
    }
  }
  if (!(spec.dt > 0.0) || spec.horizon <= 0) {
    throw degenerate_error("env: dt and horizon must be positive");
  }
}

std::vector<double> encode_state(const EnvSpec& spec,
                                 const std::vector<double>& latent) {
  check_state_dim(spec, latent);
  std::vector<double> s(latent.size());
  for (std::size_t i = 0; i < latent.size(); ++i) {
    s[i] = spec.encode_scale[i] * latent[i] + spec.encode_offset[i];
  }
  return s;
}

std::vector<double> decode_state(const EnvSpec& spec,
                                 const std::vector<double>& encoded) {
  check_state_dim(spec, encoded);
  std::vector<double> x(encoded.size());
  for (std::size_t i = 0; i < encoded.size(); ++i) {
    x[i] = (encoded[i] - spec.encode_offset[i]) / spec.encode_scale[i];
  }
  return x;
}

std::pair<std::vector<double>, double> env_step(const EnvSpec& spec,
                                                const std::vector<double>& state,
                                                const std::vector<double>& action) {
  if (action.size() != static_cast<std::size_t>(spec.action_dim)) {
    throw shape_error("env_step: action length mismatch");
  }
  const auto x = decode_state(spec, state);
  std::vector<double> next(x.size());
  double reward = 0.0;
  if (spec.name == EnvName::linear_reach) {
    double norm_sq = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      next[i] = x[i] + spec.dt * clip1(action[i]);
      norm_sq += next[i] * next[i];
    }
    reward = -std::sqrt(norm_sq);
  } else {
    for (std::size_t b = 0; b < static_cast<std::size_t>(spec.action_dim); ++b) {
      const double a = clip1(action[b]);
      const double pos = x[2 * b];
      const double vel = x[2 * b + 1];
      const double vel_next =
          vel + spec.dt * (a - spec.spring_kappa * pos - spec.spring_damping * vel);
      const double pos_next = pos + spec.dt * vel_next;
      next[2 * b] = pos_next;
      next[2 * b + 1] = vel_next;
      reward -= pos_next * pos_next + 0.1 * a * a;
    }
  }
  for (double v : next) {
    if (!std::isfinite(v)) throw numeric_error("env_step: non-finite state");
  }
  if (!std::isfinite(reward)) throw numeric_error("env_step: non-finite reward");
  return {encode_state(spec, next), reward};
}

std::vector<double> expert_action(const EnvSpec& spec,
                                  const std::vector<double>& state) {
  const auto x = decode_state(spec, state);
  std::vector<double> a(static_cast<std::size_t>(spec.action_dim));
  if (spec.name == EnvName::linear_reach) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = clip1(-x[i] / spec.dt);
  } else {
    for (std::size_t b = 0; b < a.size(); ++b) {
      a[b] = clip1(-spec.gain_pos * x[2 * b] - spec.gain_vel * x[2 * b + 1]);
    }
  }
  return a;
}

RolloutResult rollout(const EnvSpec& spec, const Policy& policy,
                      std::size_t episodes, std::uint64_t rng_seed) {
  validate_env(spec);
  if (episodes == 0) throw degenerate_error("rollout: episodes must be positive");
  RolloutResult res;
  res.trajectories.reserve(episodes);
  const auto n = static_cast<std::size_t>(spec.state_dim);
  for (std::size_t ep = 0; ep < episodes; ++ep) {
    Rng rng(stream_seed(rng_seed, "episode-" + std::to_string(ep)));
    std::vector<double> latent(n);
    for (std::size_t i = 0; i < n; ++i) {
      latent[i] = rng.uniform(spec.init_low[i], spec.init_high[i]);
    }
    Trajectory traj;
    traj.states.push_back(encode_state(spec, latent));
    for (int t = 0; t < spec.horizon; ++t) {
      auto action = policy(traj.states.back());
      if (action.size() != static_cast<std::size_t>(spec.action_dim)) {
        throw shape_error("rollout: policy produced an action of wrong length");
      }
      auto [next, reward] = env_step(spec, traj.states.back(), action);
      traj.actions.push_back(std::move(action));
      traj.rewards.push_back(reward);
      traj.total_return += reward;
      traj.states.push_back(std::move(next));
    }
    res.mean_return += traj.total_return;
    res.trajectories.push_back(std::move(traj));
  }
  res.mean_return /= static_cast<double>(episodes);
  return res;
}

double return_ratio(double attacker_return, double victim_return,
                    std::optional<double> r_min) {
  if (r_min) {
    const double denom = victim_return - *r_min;
    if (denom == 0.0) {
      throw degenerate_error("return_ratio: victim return equals r_min");
    }
    return (attacker_return - *r_min) / denom;
  }
  if (victim_return == 0.0) {
    throw degenerate_error("return_ratio: victim return is zero");
  }
  return attacker_return / victim_return;
}

double measure_r_min(const EnvSpec& spec, std::size_t episodes,
                     std::uint64_t rng_seed) {
  const std::vector<double> zeros(static_cast<std::size_t>(spec.action_dim), 0.0);
  const auto res = rollout(
      spec, [&zeros](const std::vector<double>&) { return zeros; }, episodes,
      rng_seed);
  return res.mean_return;
}

namespace {

void write_kv_vector(std::ostream& out, const char* key,
                     const std::vector<double>& v) {
  out << key << " =";
  for (double x : v) out << ' ' << fmt17(x);
  out << '\n';
}

std::vector<double> parse_vector(const std::string& value, const char* key) {
  std::istringstream in(value);
  std::vector<double> v;
  double x;
  while (in >> x) v.push_back(x);
  if (v.empty()) {
    throw format_error(std::string("env file: empty vector for ") + key);
  }
  return v;
}

}  // namespace

void save_env(const EnvSpec& spec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw format_error("save_env: cannot write " + path);
  out << "name = " << env_name(spec.name) << '\n';
  out << "state_dim = " << spec.state_dim << '\n';
  out << "action_dim = " << spec.action_dim << '\n';
  out << "dt = " << fmt17(spec.dt) << '\n';
  out << "horizon = " << spec.horizon << '\n';
  write_kv_vector(out, "encode_scale", spec.encode_scale);
  write_kv_vector(out, "encode_offset", spec.encode_offset);
  write_kv_vector(out, "init_low", spec.init_low);
  write_kv_vector(out, "init_high", spec.init_high);
  out << "spring_kappa = " << fmt17(spec.spring_kappa) << '\n';
  out << "spring_damping = " << fmt17(spec.spring_damping) << '\n';
  out << "gain_pos = " << fmt17(spec.gain_pos) << '\n';
  out << "gain_vel = " << fmt17(spec.gain_vel) << '\n';
  out << "r_min = " << fmt17(spec.r_min) << '\n';
  if (!out) throw format_error("save_env: write failed for " + path);
}

EnvSpec load_env(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw format_error("load_env: cannot open " + path);
  EnvSpec spec;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw format_error("env file: malformed line " + std::to_string(line_no) +
                         " in " + path);
    }
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      const auto b = s.find_last_not_of(" \t");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "name") spec.name = env_from_name(value);
      else if (key == "state_dim") spec.state_dim = std::stoi(value);
      else if (key == "action_dim") spec.action_dim = std::stoi(value);
      else if (key == "dt") spec.dt = std::stod(value);
      else if (key == "horizon") spec.horizon = std::stoi(value);
      else if (key == "encode_scale") spec.encode_scale = parse_vector(value, "encode_scale");
      else if (key == "encode_offset") spec.encode_offset = parse_vector(value, "encode_offset");
      else if (key == "init_low") spec.init_low = parse_vector(value, "init_low");
      else if (key == "init_high") spec.init_high = parse_vector(value, "init_high");
      else if (key == "spring_kappa") spec.spring_kappa = std::stod(value);
      else if (key == "spring_damping") spec.spring_damping = std::stod(value);
      else if (key == "gain_pos") spec.gain_pos = std::stod(value);
      else if (key == "gain_vel") spec.gain_vel = std::stod(value);
      else if (key == "r_min") spec.r_min = std::stod(value);
      else {
        throw format_error("env file: unknown key '" + key + "' in " + path);
      }
    } catch (const std::invalid_argument&) {
      throw format_error("env file: bad value for '" + key + "' in " + path);
    }
  }
  validate_env(spec);
  return spec;
}

void save_trajectories_csv(const std::vector<Trajectory>& trajectories,
                           const std::string& path) {
  std::ofstream out(path);
  if (!out) throw format_error("save_trajectories_csv: cannot write " + path);
  if (trajectories.empty()) throw degenerate_error("save_trajectories_csv: no trajectories");
  const std::size_t n = trajectories.front().states.front().size();
  const std::size_t k = trajectories.front().actions.front().size();
  out << "episode,t";
  for (std::size_t i = 0; i < n; ++i) out << ",s_" << i;
  for (std::size_t i = 0; i < k; ++i) out << ",a_" << i;
  out << ",reward\n";
  for (std::size_t ep = 0; ep < trajectories.size(); ++ep) {
    const auto& traj = trajectories[ep];
    for (std::size_t t = 0; t < traj.actions.size(); ++t) {
      out << ep << ',' << t;
      for (double v : traj.states[t]) out << ',' << fmt17(v);
      for (double v : traj.actions[t]) out << ',' << fmt17(v);
      out << ',' << fmt17(traj.rewards[t]) << '\n';
    }
  }
  if (!out) throw format_error("save_trajectories_csv: write failed for " + path);
}

}  // namespace lab
