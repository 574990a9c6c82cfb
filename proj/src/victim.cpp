#include "lab/victim.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lab/dataset.hpp"
#include "lab/errors.hpp"
#include "lab/textio.hpp"

namespace lab {

VictimBundle train_victim(const EnvSpec& env, std::size_t trajectories,
                          const TrainConfig& cfg, std::uint64_t rng_seed,
                          const VictimBuildExtras& extras) {
  validate_env(env);
  if (trajectories == 0) {
    throw degenerate_error("train_victim: need at least one trajectory");
  }
  const auto n = static_cast<std::size_t>(env.state_dim);
  const auto k = static_cast<std::size_t>(env.action_dim);

  // Noisy expert rollouts: exploration noise perturbs the executed action,
  // while the stored label stays the clean expert answer for that state.
  Rng noise(stream_seed(rng_seed, "victim-explore"));
  TransferDataset data;
  data.state_dim = n;
  data.action_dim = k;
  StateSample visited;
  visited.dim = n;
  const Policy noisy_expert = [&](const std::vector<double>& s) {
    auto a = expert_action(env, s);
    for (double& v : a) {
      v = std::clamp(v + noise.normal(0.0, extras.sigma_explore), -1.0, 1.0);
    }
    return a;
  };
  const auto collected =
      rollout(env, noisy_expert, trajectories, stream_seed(rng_seed, "victim-rollouts"));
  for (const auto& traj : collected.trajectories) {
    for (std::size_t t = 0; t < traj.actions.size(); ++t) {
      const auto& s = traj.states[t];
      data.states.insert(data.states.end(), s.begin(), s.end());
      const auto label = expert_action(env, s);
      data.actions.insert(data.actions.end(), label.begin(), label.end());
    }
    for (const auto& s : traj.states) {
      visited.states.insert(visited.states.end(), s.begin(), s.end());
    }
  }
  if (visited.size() < extras.min_visited) {
    throw build_error("train_victim: only " + std::to_string(visited.size()) +
                      " visited states; need " + std::to_string(extras.min_visited) +
                      " for reference statistics");
  }

  std::vector<int> dims;
  dims.push_back(static_cast<int>(n));
  for (int h : extras.hidden) dims.push_back(h);
  dims.push_back(static_cast<int>(k));
  Rng init(stream_seed(rng_seed, "victim-init"));
  auto model = make_mlp(dims, Activation::tanh, Activation::tanh, init);

  TrainConfig train = cfg;
  train.seed = stream_seed(rng_seed, "victim-train");
  train.val_target = extras.val_target;
  const auto fit = behavioral_cloning(data, std::move(model), data.size(), train);

  VictimBundle bundle;
  bundle.policy = fit.model;
  bundle.env = env;
  bundle.ref = fit_reference(visited);
  bundle.cov_star.assign(n * n, 0.0);
  {
    const std::size_t count = visited.size();
    for (std::size_t i = 0; i < count; ++i) {
      const double* s = visited.row(i);
      for (std::size_t a = 0; a < n; ++a) {
        const double da = s[a] - bundle.ref.mu_star[a];
        for (std::size_t b = a; b < n; ++b) {
          bundle.cov_star[a * n + b] += da * (s[b] - bundle.ref.mu_star[b]);
        }
      }
    }
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a; b < n; ++b) {
        const double v = bundle.cov_star[a * n + b] / static_cast<double>(count);
        bundle.cov_star[a * n + b] = v;
        bundle.cov_star[b * n + a] = v;
      }
    }
  }

  const Policy victim_policy = [&bundle](const std::vector<double>& s) {
    return mlp_forward(bundle.policy, s);
  };
  const Policy expert = [&env](const std::vector<double>& s) {
    return expert_action(env, s);
  };
  const auto eval_seed = stream_seed(rng_seed, "victim-eval");
  const auto victim_eval = rollout(env, victim_policy, extras.eval_episodes, eval_seed);
  const auto expert_eval = rollout(env, expert, extras.eval_episodes, eval_seed);
  bundle.victim_return = victim_eval.mean_return;
  bundle.expert_return = expert_eval.mean_return;

  double var = 0.0;
  for (const auto& t : victim_eval.trajectories) {
    const double d = t.total_return - victim_eval.mean_return;
    var += d * d;
  }
  bundle.victim_return_spread =
      std::sqrt(var / static_cast<double>(victim_eval.trajectories.size()));

  if (!(env.r_min < bundle.expert_return)) {
    throw build_error("train_victim: r_min must lie below the expert return");
  }
  const double competence =
      return_ratio(bundle.victim_return, bundle.expert_return, env.r_min);
  if (competence < extras.competence_ratio) {
    throw build_error("train_victim: victim reached only " +
                      fmt17(competence) + " of expert performance (floor " +
                      fmt17(extras.competence_ratio) + ")");
  }
  return bundle;
}

BudgetLedger make_ledger(std::size_t total, std::size_t reserved,
                         std::size_t base, std::size_t attacker) {
  if (total == 0 || base == 0 || attacker == 0) {
    throw degenerate_error("make_ledger: budgets must be positive");
  }
  if (reserved >= total) {
    throw degenerate_error("make_ledger: reserved budget must stay below total");
  }
  BudgetLedger ledger;
  ledger.total = total;
  ledger.reserved = reserved;
  ledger.base = base;
  ledger.attacker = attacker;
  ledger.next_chunk = base;
  return ledger;
}

Oracle::Oracle(const MlpModel& policy, BudgetLedger& ledger)
    : policy_(policy), ledger_(ledger) {}

Oracle::Oracle(const MlpModel& policy, BudgetLedger& ledger, DefenseRange range,
               std::uint64_t defense_seed)
    : policy_(policy), ledger_(ledger), defense_(std::move(range)),
      defense_rng_(Rng(defense_seed)) {
  if (defense_->lo.size() != static_cast<std::size_t>(policy.input_dim()) ||
      defense_->hi.size() != defense_->lo.size()) {
    throw shape_error("Oracle: defense range must match the state dimension");
  }
}

std::vector<double> Oracle::query(const StateSample& states) {
  const std::size_t m = states.size();
  const auto n = static_cast<std::size_t>(policy_.input_dim());
  const auto k = static_cast<std::size_t>(policy_.output_dim());
  if (m == 0) return {};
  if (states.dim != n) {
    throw shape_error("Oracle::query: state dimension mismatch");
  }
  {
    const std::lock_guard<std::mutex> lock(mutex_);
    if (ledger_.consumed + m > ledger_.total) {
      throw budget_error("Oracle::query: " + std::to_string(m) +
                         " states would exceed the remaining budget of " +
                         std::to_string(ledger_.total - ledger_.consumed));
    }
    ledger_.consumed += m;
  }

  // Answer in chunks so the per-call forward cache stays small even for
  // multi-million-row queries.
  constexpr std::size_t kChunk = 65536;
  std::vector<double> actions(m * k);
  for (std::size_t start = 0; start < m; start += kChunk) {
    const std::size_t rows = std::min(kChunk, m - start);
    mlp_forward_batch(policy_, states.states.data() + start * n, rows,
                      actions.data() + start * k);
  }
  if (defense_) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* s = states.row(i);
      bool in_range = true;
      for (std::size_t j = 0; j < n; ++j) {
        if (s[j] < defense_->lo[j] || s[j] > defense_->hi[j]) {
          in_range = false;
          break;
        }
      }
      if (!in_range) {
        for (std::size_t j = 0; j < k; ++j) {
          actions[i * k + j] = defense_rng_->uniform(-1.0, 1.0);
        }
      }
    }
  }
  return actions;
}

DefenseRange defense_from_reference(const ReferenceStats& ref) {
  if (ref.dim() == 0) throw degenerate_error("defense_from_reference: empty stats");
  return DefenseRange{ref.lo, ref.hi};
}

void save_victim_bundle(const VictimBundle& bundle, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw format_error("save_victim_bundle: cannot create " + dir);
  save_model(bundle.policy, (fs::path(dir) / "policy.json").string());
  save_reference(bundle.ref, (fs::path(dir) / "reference.txt").string());
  save_env(bundle.env, (fs::path(dir) / "env.txt").string());
  std::ofstream meta(fs::path(dir) / "meta.txt");
  if (!meta) throw format_error("save_victim_bundle: cannot write meta.txt");
  meta << "victim_return = " << fmt17(bundle.victim_return) << '\n';
  meta << "victim_return_spread = " << fmt17(bundle.victim_return_spread) << '\n';
  meta << "expert_return = " << fmt17(bundle.expert_return) << '\n';
  meta << "cov_star =";
  for (double v : bundle.cov_star) meta << ' ' << fmt17(v);
  meta << '\n';
  if (!meta) throw format_error("save_victim_bundle: write failed for meta.txt");
}

VictimBundle load_victim_bundle(const std::string& dir) {
  namespace fs = std::filesystem;
  VictimBundle bundle;
  bundle.policy = load_model((fs::path(dir) / "policy.json").string());
  bundle.ref = load_reference((fs::path(dir) / "reference.txt").string());
  bundle.env = load_env((fs::path(dir) / "env.txt").string());
  std::ifstream meta(fs::path(dir) / "meta.txt");
  if (!meta) throw format_error("load_victim_bundle: cannot open meta.txt in " + dir);
  std::string line;
  int found = 0;
  while (std::getline(meta, line)) {
    std::istringstream row(line);
    std::string key, eq;
    if (!(row >> key >> eq) || eq != "=") continue;
    if (key == "cov_star") {
      bundle.cov_star.clear();
      double v;
      while (row >> v) bundle.cov_star.push_back(v);
      ++found;
      continue;
    }
    double value;
    if (!(row >> value)) continue;
    if (key == "victim_return") {
      bundle.victim_return = value;
      ++found;
    } else if (key == "victim_return_spread") {
      bundle.victim_return_spread = value;
      ++found;
    } else if (key == "expert_return") {
      bundle.expert_return = value;
      ++found;
    }
  }
  if (found != 4) {
    throw format_error("load_victim_bundle: incomplete meta.txt in " + dir);
  }
  const auto n = static_cast<std::size_t>(bundle.env.state_dim);
  if (bundle.policy.input_dim() != bundle.env.state_dim ||
      bundle.policy.output_dim() != bundle.env.action_dim ||
      bundle.ref.dim() != n || bundle.cov_star.size() != n * n) {
    throw format_error("load_victim_bundle: inconsistent bundle in " + dir);
  }
  return bundle;
}

}  // namespace lab
