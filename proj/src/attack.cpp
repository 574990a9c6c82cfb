#include "lab/attack.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <utility>

#include <json.hpp>

#include "lab/envs.hpp"
#include "lab/errors.hpp"
#include "lab/textio.hpp"

namespace lab {

namespace {

double mean_of(const std::vector<double>& v) {
  double total = 0.0;
  for (double x : v) total += x;
  return total / static_cast<double>(v.size());
}

// Rounds a real-valued sample demand to a count, saturating at cap.
std::size_t budget_round(double x, std::size_t cap) {
  if (!std::isfinite(x) || x < 0.0) {
    throw numeric_error("attack: sample demand is not a finite non-negative value");
  }
  if (x >= static_cast<double>(cap)) return cap;
  return static_cast<std::size_t>(std::llround(x));
}

std::vector<int> net_dims(std::size_t in, const std::vector<int>& hidden,
                          std::size_t out) {
  std::vector<int> dims;
  dims.reserve(hidden.size() + 2);
  dims.push_back(static_cast<int>(in));
  for (int h : hidden) dims.push_back(h);
  dims.push_back(static_cast<int>(out));
  return dims;
}

void validate_config(const AttackConfig& cfg, std::size_t n) {
  const auto& b = cfg.budget;
  if (b.total == 0 || b.base == 0) {
    throw degenerate_error("attack: total and base budgets must be positive");
  }
  if (b.reserved >= b.total) {
    throw degenerate_error("attack: reserved budget must stay below the total");
  }
  if (b.base > b.total - b.reserved) {
    throw degenerate_error("attack: base budget must fit inside total minus reserved");
  }
  if (cfg.epochs_per_iter < 1) {
    throw degenerate_error("attack: epochs_per_iter must be at least 1");
  }
  if (cfg.demand_floor < 2) {
    throw degenerate_error("attack: demand_floor must allow a train/validation split");
  }
  if (!cfg.init_mu.empty() && cfg.init_mu.size() != n) {
    throw shape_error("attack: init_mu length does not match the state dimension");
  }
  if (!cfg.init_sigma.empty()) {
    if (cfg.init_sigma.size() != n) {
      throw shape_error("attack: init_sigma length does not match the state dimension");
    }
    for (double s : cfg.init_sigma) {
      if (!(s > 0.0)) {
        throw degenerate_error("attack: init_sigma components must be positive");
      }
    }
  }
}

void forward_in_chunks(const MlpModel& m, const double* x, std::size_t rows,
                       double* y) {
  constexpr std::size_t kChunk = 65536;
  const auto n = static_cast<std::size_t>(m.input_dim());
  const auto k = static_cast<std::size_t>(m.output_dim());
  for (std::size_t start = 0; start < rows; start += kChunk) {
    const std::size_t count = std::min(kChunk, rows - start);
    mlp_forward_batch(m, x + start * n, count, y + start * k);
  }
}

struct ReturnEval {
  double attacker = 0.0;
  double victim = 0.0;
  double ratio = 0.0;
};

// Paired-episode evaluation: both policies see the same start states.
ReturnEval evaluate_against_victim(const VictimBundle& bundle,
                                   const MlpModel& attacker,
                                   std::size_t episodes,
                                   std::uint64_t eval_seed) {
  const Policy att = [&attacker](const std::vector<double>& s) {
    return mlp_forward(attacker, s);
  };
  const Policy vic = [&bundle](const std::vector<double>& s) {
    return mlp_forward(bundle.policy, s);
  };
  ReturnEval out;
  out.attacker = rollout(bundle.env, att, episodes, eval_seed).mean_return;
  out.victim = rollout(bundle.env, vic, episodes, eval_seed).mean_return;
  out.ratio = return_ratio(out.attacker, out.victim, bundle.env.r_min);
  return out;
}

Oracle make_oracle(const VictimBundle& bundle, BudgetLedger& ledger,
                   bool defended, std::uint64_t seed) {
  if (defended) {
    return Oracle(bundle.policy, ledger, defense_from_reference(bundle.ref),
                  stream_seed(seed, "defense"));
  }
  return Oracle(bundle.policy, ledger);
}

}  // namespace

TrainConfig default_final_train() {
  TrainConfig cfg;
  cfg.epochs = 2000;
  cfg.early_stop_patience = 20;
  return cfg;
}

TransferDataset query_action(Oracle& oracle, const GaussianEstimate& est,
                             std::size_t b, std::uint64_t rng_seed) {
  if (b == 0) throw degenerate_error("query_action: budget must be positive");
  Rng rng(rng_seed);
  auto states = sample(est, b, rng);
  auto actions = oracle.query(states);
  TransferDataset d;
  d.state_dim = est.dim();
  d.action_dim = actions.size() / b;
  d.states = std::move(states.states);
  d.actions = std::move(actions);
  d.make_split(rng, 0.1);
  return d;
}

TransferDataset self_query(const MlpModel& policy, const GaussianEstimate& est,
                           std::size_t b, std::uint64_t rng_seed) {
  if (b == 0) throw degenerate_error("self_query: budget must be positive");
  if (est.dim() != static_cast<std::size_t>(policy.input_dim())) {
    throw shape_error("self_query: estimate dimension does not match the policy");
  }
  Rng rng(rng_seed);
  auto states = sample(est, b, rng);
  const auto k = static_cast<std::size_t>(policy.output_dim());
  TransferDataset d;
  d.state_dim = est.dim();
  d.action_dim = k;
  d.actions.resize(b * k);
  forward_in_chunks(policy, states.states.data(), b, d.actions.data());
  d.states = std::move(states.states);
  d.make_split(rng, 0.1);
  return d;
}

double distribution_evaluate(const TransferDataset& d_v, MlpModel evaluator,
                             std::size_t demand, const TrainConfig& cfg) {
  if (demand > d_v.size()) {
    throw degenerate_error("distribution_evaluate: demand " +
                           std::to_string(demand) + " exceeds the dataset of " +
                           std::to_string(d_v.size()) + " pairs");
  }
  const auto fit = behavioral_cloning(d_v, std::move(evaluator), demand, cfg);
  return fit.val_loss;
}

FinalTrainResult final_retrain(TransferDataset d_tilde, Oracle& oracle,
                               const std::vector<double>& mu,
                               const std::vector<double>& sigma,
                               const AttackConfig& cfg) {
  if (d_tilde.size() == 0) {
    throw degenerate_error("final_retrain: stored dataset is empty");
  }
  const std::size_t remaining = oracle.ledger().remaining();
  if (remaining > 0) {
    const auto extra = query_action(oracle, diagonal_estimate(mu, sigma),
                                    remaining, stream_seed(cfg.seed, "final-query"));
    d_tilde = concat(d_tilde, extra);
  }
  Rng init(stream_seed(cfg.seed, "final-init"));
  auto fresh = make_mlp(
      net_dims(d_tilde.state_dim, cfg.attacker_hidden, d_tilde.action_dim),
      cfg.hidden_activation, Activation::tanh, init);
  TrainConfig train = cfg.final_train;
  train.seed = stream_seed(cfg.seed, "final-train");
  auto fit = behavioral_cloning(d_tilde, std::move(fresh), d_tilde.size(), train);
  FinalTrainResult out;
  out.policy = std::move(fit.model);
  out.dataset_size = d_tilde.size();
  out.val_loss = fit.val_loss;
  out.epochs_run = fit.epochs_run;
  return out;
}

ExtractionResult extraction_attack(const VictimBundle& bundle, bool defended,
                                   const AttackConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto n = static_cast<std::size_t>(bundle.policy.input_dim());
  const auto k = static_cast<std::size_t>(bundle.policy.output_dim());
  validate_config(cfg, n);

  auto ledger = make_ledger(cfg.budget.total, cfg.budget.reserved,
                            cfg.budget.base,
                            cfg.budget.attacker == 0 ? cfg.budget.base
                                                     : cfg.budget.attacker);
  Oracle oracle = make_oracle(bundle, ledger, defended, cfg.seed);
  const auto ref_gauss =
      diagonal_estimate(bundle.ref.mu_star, bundle.ref.sigma_star);

  std::vector<double> mu =
      cfg.init_mu.empty() ? std::vector<double>(n, 0.0) : cfg.init_mu;
  std::vector<double> sigma =
      cfg.init_sigma.empty() ? std::vector<double>(n, 1.0) : cfg.init_sigma;

  Rng attacker_init(stream_seed(cfg.seed, "attacker-init"));
  MlpModel pi_a = make_mlp(net_dims(n, cfg.attacker_hidden, k),
                           cfg.hidden_activation, Activation::tanh, attacker_init);
  Rng reward_init(stream_seed(cfg.seed, "reward-init"));
  MlpModel reward = make_mlp(net_dims(n + k, cfg.reward_hidden, 1),
                             cfg.hidden_activation, Activation::sigmoid, reward_init);

  AttackReport report;
  report.seed = cfg.seed;

  TransferDataset d_tilde;
  double l_tilde = -std::numeric_limits<double>::infinity();
  std::vector<double> mu_t = mu;
  std::vector<double> sigma_t = sigma;
  std::size_t best_iter = 0;

  const std::size_t b_v = cfg.budget.base;
  const std::size_t loop_cap = cfg.budget.total - cfg.budget.reserved;
  std::size_t b_c = b_v;

  for (std::size_t iter = 0;; ++iter) {
    const std::string tag = std::to_string(iter);
    const double sigma_bar = mean_of(sigma);

    TransferDataset d_v;
    try {
      d_v = query_action(oracle, diagonal_estimate(mu, sigma), b_c,
                         stream_seed(cfg.seed, "query-" + tag));
    } catch (const budget_error&) {
      report.warnings.push_back("iteration " + tag +
                                ": budget exhausted before querying; loop ended early");
      break;
    }

    IterationRecord rec;
    rec.index = iter;
    rec.mu = mu;
    rec.sigma = sigma;
    rec.sigma_mean = sigma_bar;
    rec.b_c = b_c;
    rec.kl = kl_diag(ref_gauss, diagonal_estimate(mu, sigma));

    const std::size_t dyn_demand = std::min(
        d_v.size(),
        std::max(cfg.demand_floor,
                 budget_round(static_cast<double>(b_v) * sigma_bar, d_v.size())));

    // Evaluate how hard this transfer dataset is to imitate.
    Rng eval_init(stream_seed(cfg.seed, "eval-init-" + tag));
    auto evaluator = make_mlp(net_dims(n, cfg.evaluator_hidden, k),
                              cfg.hidden_activation, Activation::tanh, eval_init);
    TrainConfig eval_cfg;
    eval_cfg.learning_rate = cfg.learning_rate;
    eval_cfg.batch_size = cfg.batch_size;
    eval_cfg.epochs = cfg.epochs_per_iter;
    eval_cfg.seed = stream_seed(cfg.seed, "eval-train-" + tag);
    const std::size_t eval_demand =
        cfg.fixed_evaluator_budget ? b_v : dyn_demand;
    rec.eval_loss =
        distribution_evaluate(d_v, std::move(evaluator), eval_demand, eval_cfg);

    if (rec.eval_loss > l_tilde) {
      l_tilde = rec.eval_loss;
      mu_t = mu;
      sigma_t = sigma;
      best_iter = iter;
      d_tilde = d_v;
    }

    // Clone the victim's answers into the attacker policy.
    const std::size_t bc_demand =
        cfg.dynamic_bc_budget ? dyn_demand : std::min(b_v, d_v.size());
    TrainConfig bc_cfg = eval_cfg;
    bc_cfg.seed = stream_seed(cfg.seed, "bc-train-" + tag);
    {
      auto fit = behavioral_cloning(d_v, pi_a, bc_demand, bc_cfg);
      pi_a = std::move(fit.model);
    }

    // Teach the discriminator to tell attacker answers from victim answers.
    if (cfg.use_reward_model) {
      const std::size_t b_a =
          cfg.budget.attacker == 0 ? b_c : cfg.budget.attacker;
      const auto d_a = self_query(pi_a, diagonal_estimate(mu, sigma), b_a,
                                  stream_seed(cfg.seed, "attacker-query-" + tag));
      RewardTrainOptions ropt;
      ropt.demand = dyn_demand;
      ropt.steps = cfg.reward_steps;
      ropt.learning_rate = cfg.reward_learning_rate;
      ropt.batch_size = cfg.reward_batch;
      ropt.prune = cfg.prune;
      ropt.seed = stream_seed(cfg.seed, "reward-train-" + tag);
      try {
        auto updated = train_reward(d_a, d_v, reward, ropt);
        reward = std::move(updated);
      } catch (const degenerate_error& e) {
        rec.refine_warning = true;
        report.warnings.push_back("iteration " + tag +
                                  ": reward training skipped (" +
                                  std::string(e.what()) + ")");
      }
    }

    // Reward-weighted refinement of the estimate on a validation subset.
    {
      Rng refine_rng(stream_seed(cfg.seed, "refine-" + tag));
      const auto idx = sample_indices(refine_rng, d_v.size(), dyn_demand);
      const auto val_count = std::max<std::size_t>(
          1, static_cast<std::size_t>(
                 std::llround(0.1 * static_cast<double>(dyn_demand))));
      const std::vector<std::size_t> val_idx(idx.end() - static_cast<std::ptrdiff_t>(val_count),
                                             idx.end());
      auto valset = d_v.subset(val_idx);
      if (cfg.prune) valset = prune_data(valset);
      if (valset.size() == 0) {
        rec.refine_warning = true;
        report.warnings.push_back("iteration " + tag +
                                  ": pruned validation split empty; estimate carried over");
      } else {
        std::vector<double> weights(valset.size());
        if (cfg.use_reward_model) {
          std::vector<double> s(n), a(k);
          for (std::size_t i = 0; i < valset.size(); ++i) {
            std::copy_n(valset.state(i), n, s.begin());
            std::copy_n(valset.action(i), k, a.begin());
            weights[i] = proxy_reward(reward, s, a);
          }
        } else {
          weights = per_pair_losses(pi_a, valset);
        }
        try {
          auto refined = dist_refine(valset, weights);
          if (refined.degenerate) {
            rec.refine_warning = true;
            report.warnings.push_back("iteration " + tag +
                                      ": refined sigma floored at the minimum");
          }
          mu = std::move(refined.mu);
          sigma = std::move(refined.sigma);
        } catch (const degenerate_error& e) {
          rec.refine_warning = true;
          report.warnings.push_back("iteration " + tag + ": refinement skipped (" +
                                    std::string(e.what()) + ")");
        }
      }
    }

    rec.consumed = ledger.consumed;
    report.iterations.push_back(std::move(rec));

    b_c = std::max(b_v, budget_round(static_cast<double>(b_v) * mean_of(sigma),
                                     cfg.budget.total));
    ledger.next_chunk = b_c;
    if (ledger.consumed + b_c >= loop_cap) break;
  }

  if (report.iterations.empty()) {
    throw degenerate_error("extraction_attack: no iteration completed");
  }
  report.iterations[best_iter].selected = true;
  report.selected.mu = mu_t;
  report.selected.sigma = sigma_t;
  report.selected.eval_loss = l_tilde;
  report.selected.iteration = best_iter;

  auto final_fit = final_retrain(std::move(d_tilde), oracle, mu_t, sigma_t, cfg);

  const auto eval = evaluate_against_victim(bundle, final_fit.policy,
                                            cfg.eval_episodes,
                                            stream_seed(cfg.seed, "final-eval"));
  report.final.attacker_return = eval.attacker;
  report.final.victim_return = eval.victim;
  report.final.return_ratio = eval.ratio;
  report.final.kl = kl_diag(ref_gauss, diagonal_estimate(mu_t, sigma_t));
  report.consumed_total = ledger.consumed;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  ExtractionResult out;
  out.policy = std::move(final_fit.policy);
  out.report = std::move(report);
  return out;
}

BaselineResult steal_with_distribution(const VictimBundle& bundle,
                                       bool defended,
                                       const GaussianEstimate& est,
                                       const AttackConfig& cfg) {
  const auto n = static_cast<std::size_t>(bundle.policy.input_dim());
  const auto k = static_cast<std::size_t>(bundle.policy.output_dim());
  validate_config(cfg, n);
  if (est.dim() != n) {
    throw shape_error("steal_with_distribution: estimate dimension mismatch");
  }

  auto ledger = make_ledger(cfg.budget.total, cfg.budget.reserved,
                            cfg.budget.base,
                            cfg.budget.attacker == 0 ? cfg.budget.base
                                                     : cfg.budget.attacker);
  Oracle oracle = make_oracle(bundle, ledger, defended, cfg.seed);
  const auto data = query_action(oracle, est, cfg.budget.total,
                                 stream_seed(cfg.seed, "expose-query"));

  Rng init(stream_seed(cfg.seed, "expose-init"));
  auto model = make_mlp(net_dims(n, cfg.attacker_hidden, k),
                        cfg.hidden_activation, Activation::tanh, init);
  TrainConfig train = cfg.final_train;
  train.seed = stream_seed(cfg.seed, "expose-train");
  auto fit = behavioral_cloning(data, std::move(model), data.size(), train);

  const auto eval = evaluate_against_victim(bundle, fit.model,
                                            cfg.eval_episodes,
                                            stream_seed(cfg.seed, "expose-eval"));
  BaselineResult out;
  out.policy = std::move(fit.model);
  out.return_ratio = eval.ratio;
  out.attacker_return = eval.attacker;
  out.victim_return = eval.victim;
  out.consumed = ledger.consumed;
  return out;
}

BaselineResult random_baseline(const VictimBundle& bundle, bool defended,
                               double scale, const AttackConfig& cfg) {
  if (!(scale > 0.0)) {
    throw degenerate_error("random_baseline: scale must be positive");
  }
  const auto n = static_cast<std::size_t>(bundle.policy.input_dim());
  const auto est = diagonal_estimate(std::vector<double>(n, 0.0),
                                     std::vector<double>(n, scale));
  return steal_with_distribution(bundle, defended, est, cfg);
}

BaselineResult reference_fit_steal(const VictimBundle& bundle, bool defended,
                                   GaussianFamily family,
                                   const AttackConfig& cfg) {
  const auto est =
      family == GaussianFamily::diagonal
          ? diagonal_estimate(bundle.ref.mu_star, bundle.ref.sigma_star)
          : full_estimate(bundle.ref.mu_star, bundle.cov_star);
  return steal_with_distribution(bundle, defended, est, cfg);
}

void save_report_json(const AttackReport& report, const std::string& path) {
  nlohmann::json j;
  j["seed"] = report.seed;
  j["consumed_total"] = report.consumed_total;
  j["wall_seconds"] = report.wall_seconds;
  j["warnings"] = report.warnings;
  j["selected"] = {{"mu", report.selected.mu},
                   {"sigma", report.selected.sigma},
                   {"eval_loss", report.selected.eval_loss},
                   {"iteration", report.selected.iteration}};
  j["final"] = {{"return_ratio", report.final.return_ratio},
                {"attacker_return", report.final.attacker_return},
                {"victim_return", report.final.victim_return},
                {"kl", report.final.kl}};
  j["iterations"] = nlohmann::json::array();
  for (const auto& it : report.iterations) {
    j["iterations"].push_back({{"index", it.index},
                               {"consumed", it.consumed},
                               {"mu", it.mu},
                               {"sigma", it.sigma},
                               {"sigma_mean", it.sigma_mean},
                               {"eval_loss", it.eval_loss},
                               {"kl", it.kl},
                               {"b_c", it.b_c},
                               {"selected", it.selected},
                               {"refine_warning", it.refine_warning}});
  }
  std::ofstream out(path);
  if (!out) throw format_error("save_report_json: cannot write " + path);
  out << j.dump(2) << '\n';
  if (!out) throw format_error("save_report_json: write failed for " + path);
}

void save_iterations_csv(const AttackReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw format_error("save_iterations_csv: cannot write " + path);
  out << "iter,consumed_budget,kl,eval_loss,sigma_mean,b_c,selected_flag\n";
  for (const auto& it : report.iterations) {
    out << it.index << ',' << it.consumed << ',' << fmt17(it.kl) << ','
        << fmt17(it.eval_loss) << ',' << fmt17(it.sigma_mean) << ',' << it.b_c
        << ',' << (it.selected ? 1 : 0) << '\n';
  }
  if (!out) throw format_error("save_iterations_csv: write failed for " + path);
}

}  // namespace lab
