#include "lab/commands.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lab/analysis.hpp"
#include "lab/attack.hpp"
#include "lab/errors.hpp"
#include "lab/rng.hpp"
#include "lab/textio.hpp"
#include "lab/victim.hpp"

namespace lab {

namespace {

namespace fs = std::filesystem;

constexpr const char* kBundleFiles[] = {"policy.json", "reference.txt",
                                        "env.txt", "meta.txt"};

std::string g6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw format_error("cannot create directory '" + dir + "': " +
                       ec.message());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  out.flush();
  if (!out) throw format_error("cannot write file: " + path);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw format_error("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Hash of everything a run consumes: the resolved config, plus the stored
// victim bundle for the commands that read one.
std::string input_hash(const ExperimentConfig& run_cfg,
                       const std::string* victim_dir) {
  std::string blob = serialize_config(run_cfg);
  if (victim_dir != nullptr) {
    for (const char* name : kBundleFiles) {
      blob += "\n--";
      blob += name;
      blob += "\n";
      blob += slurp((fs::path(*victim_dir) / name).string());
    }
  }
  return sha256_hex(blob);
}

void write_manifest(const std::string& dir, const ExperimentConfig& run_cfg,
                    ManifestMeta meta) {
  meta.finished_at = utc_timestamp();
  write_text_file((fs::path(dir) / "manifest.txt").string(),
                  manifest_text(run_cfg, meta));
}

VictimBundle load_bundle_checked(const std::string& dir) {
  if (!fs::exists(fs::path(dir) / "policy.json")) {
    throw format_error("victim bundle not found at '" + dir +
                       "'; run build-victim first");
  }
  return load_victim_bundle(dir);
}

// Each run type gets its own subdirectory of the output directory so attack
// runs, baselines, and analyses launched from one config never clobber each
// other's artifacts or manifests.
std::string run_root(const ExperimentConfig& cfg, const std::string& label) {
  return (fs::path(effective_output_dir(cfg)) / label).string();
}

// One (seed, directory) pair per run. Without --seeds the single run keeps
// the config's seed and writes directly into the run root; a range fans out
// into seed-<s>/ subdirectories.
std::vector<std::pair<std::uint64_t, std::string>> expand_runs(
    const std::string& base, std::uint64_t config_seed,
    const RunOptions& opt) {
  std::vector<std::pair<std::uint64_t, std::string>> runs;
  if (!opt.seeds.has_value()) {
    runs.emplace_back(config_seed, base);
    return runs;
  }
  const auto [a, b] = *opt.seeds;
  if (b - a >= 10000) {
    throw config_error("seed range spans more than 10000 runs");
  }
  for (std::uint64_t s = a;; ++s) {
    runs.emplace_back(
        s, (fs::path(base) / ("seed-" + std::to_string(s))).string());
    if (s == b) break;
  }
  return runs;
}

}  // namespace

AttackConfig attack_config_for_run(const ExperimentConfig& cfg,
                                   const VictimBundle& bundle,
                                   std::uint64_t seed) {
  AttackConfig acfg = cfg.attack;
  acfg.seed = seed;
  if (cfg.attack_init == "shifted3sigma") {
    const auto& ref = bundle.ref;
    acfg.init_mu.resize(ref.dim());
    acfg.init_sigma.resize(ref.dim());
    for (std::size_t j = 0; j < ref.dim(); ++j) {
      acfg.init_mu[j] = ref.mu_star[j] + 3.0 * ref.sigma_star[j];
      acfg.init_sigma[j] = ref.sigma_star[j];
    }
  }
  return acfg;
}

namespace {

void run_attack_once(const ExperimentConfig& cfg, const VictimBundle& bundle,
                     std::uint64_t seed, const std::string& run_dir,
                     const std::string& victim_dir) {
  ExperimentConfig run_cfg = cfg;
  run_cfg.seed = seed;
  const AttackConfig acfg = attack_config_for_run(cfg, bundle, seed);

  ManifestMeta meta;
  meta.command = "attack";
  meta.started_at = utc_timestamp();
  meta.input_sha256 = input_hash(run_cfg, &victim_dir);
  ensure_dir(run_dir);

  if (cfg.attack_baseline == "none") {
    const ExtractionResult res =
        extraction_attack(bundle, cfg.defense_enabled, acfg);
    save_report_json(res.report, (fs::path(run_dir) / "report.json").string());
    save_iterations_csv(res.report,
                        (fs::path(run_dir) / "iterations.csv").string());
    meta.artifacts = {"report.json", "iterations.csv"};
    write_manifest(run_dir, run_cfg, meta);

    std::string delta = "n/a";
    if (!res.report.iterations.empty() &&
        res.report.iterations.front().kl > 0.0) {
      delta = g6(delta_kl(res.report.iterations.front().kl,
                          res.report.final.kl)) +
              "%";
    }
    std::cout << "attack seed=" << seed
              << " return_ratio=" << g6(res.report.final.return_ratio)
              << " kl=" << g6(res.report.final.kl) << " delta_kl=" << delta
              << " consumed=" << res.report.consumed_total
              << " iterations=" << res.report.iterations.size() << " -> "
              << run_dir << '\n';
    return;
  }

  // Fixed-distribution baselines share the attack's budget and final-training
  // regimen, so their numbers are comparable run for run.
  BaselineResult res;
  nlohmann::json j;
  j["baseline"] = cfg.attack_baseline;
  if (cfg.attack_baseline == "reffit") {
    res = reference_fit_steal(bundle, cfg.defense_enabled,
                              GaussianFamily::diagonal, acfg);
    j["family"] = "diagonal";
  } else {
    const double sigma0 = (cfg.attack_baseline == "random1")    ? 1.0
                          : (cfg.attack_baseline == "random10") ? 10.0
                                                                : 100.0;
    res = random_baseline(bundle, cfg.defense_enabled, sigma0, acfg);
    j["sigma0"] = sigma0;
  }
  j["defended"] = cfg.defense_enabled;
  j["seed"] = seed;
  j["consumed"] = res.consumed;
  j["return_ratio"] = res.return_ratio;
  j["attacker_return"] = res.attacker_return;
  j["victim_return"] = res.victim_return;
  write_text_file((fs::path(run_dir) / "baseline_report.json").string(),
                  j.dump(2) + "\n");
  meta.artifacts = {"baseline_report.json"};
  write_manifest(run_dir, run_cfg, meta);

  std::cout << "attack baseline=" << cfg.attack_baseline << " seed=" << seed
            << " return_ratio=" << g6(res.return_ratio)
            << " consumed=" << res.consumed << " -> " << run_dir << '\n';
}

// Echo of the full resolved config, safe to append to a summary document.
std::string commented_config(const ExperimentConfig& cfg) {
  std::istringstream in(serialize_config(cfg));
  std::ostringstream out;
  out << "# resolved config\n";
  std::string line;
  while (std::getline(in, line)) out << "# " << line << '\n';
  return out.str();
}

void run_correlation_once(const ExperimentConfig& cfg,
                          const VictimBundle& bundle, std::uint64_t seed,
                          const std::string& run_dir,
                          const std::string& victim_dir) {
  ExperimentConfig run_cfg = cfg;
  run_cfg.seed = seed;
  AttackConfig ccfg = cfg.attack;
  ccfg.seed = seed;
  ccfg.attacker_hidden = cfg.analysis_hidden;
  ccfg.batch_size = cfg.analysis_batch;
  ccfg.learning_rate = cfg.analysis_learning_rate;

  ManifestMeta meta;
  meta.command = "analyze";
  meta.started_at = utc_timestamp();
  meta.input_sha256 = input_hash(run_cfg, &victim_dir);
  ensure_dir(run_dir);

  const CorrelationResult res = correlation_experiment(
      bundle, cfg.analysis_count, cfg.analysis_points_per_dist, ccfg, seed);
  save_correlation_csv((fs::path(run_dir) / "correlation.csv").string(), res.records);

  std::ostringstream summary;
  summary << "experiment = correlation\n";
  summary << "rho = " << fmt17(res.rho) << '\n';
  summary << "p_value = " << fmt17(res.p_value) << '\n';
  summary << "count = " << res.records.size() << '\n';
  summary << "points_per_dist = " << cfg.analysis_points_per_dist << '\n';
  summary << "seed = " << seed << '\n';
  summary << commented_config(run_cfg);
  write_text_file((fs::path(run_dir) / "summary.txt").string(),
                  summary.str());

  meta.artifacts = {"correlation.csv", "summary.txt"};
  write_manifest(run_dir, run_cfg, meta);

  std::cout << "analyze correlation seed=" << seed << " rho=" << g6(res.rho)
            << " p=" << g6(res.p_value) << " count=" << res.records.size()
            << " -> " << run_dir << '\n';
}

void run_sweep_once(const ExperimentConfig& cfg, const VictimBundle& bundle,
                    std::uint64_t seed, const std::string& run_dir,
                    const std::string& victim_dir) {
  ExperimentConfig run_cfg = cfg;
  run_cfg.seed = seed;
  AttackConfig acfg = cfg.attack;
  acfg.seed = seed;

  ManifestMeta meta;
  meta.command = "analyze";
  meta.started_at = utc_timestamp();
  meta.input_sha256 = input_hash(run_cfg, &victim_dir);
  ensure_dir(run_dir);

  const std::vector<SweepPoint> points = robustness_sweep(
      bundle, cfg.analysis_lambda_list, cfg.analysis_z_list,
      cfg.analysis_queries_per_point, acfg, seed);
  save_sweep_csv((fs::path(run_dir) / "sweep.csv").string(), points);

  std::ostringstream summary;
  summary << "experiment = sweep\n";
  summary << "points = " << points.size() << '\n';
  summary << "queries_per_point = " << cfg.analysis_queries_per_point << '\n';
  summary << "seed = " << seed << '\n';
  for (std::size_t i = 0; i < points.size(); ++i) {
    const char* kind =
        points[i].kind == SweepKind::sigma_scale ? "sigma_scale" : "mu_shift";
    summary << "point." << i << " = " << kind << ' ' << fmt17(points[i].value)
            << " rr " << fmt17(points[i].rr) << '\n';
  }
  summary << commented_config(run_cfg);
  write_text_file((fs::path(run_dir) / "summary.txt").string(),
                  summary.str());

  meta.artifacts = {"sweep.csv", "summary.txt"};
  write_manifest(run_dir, run_cfg, meta);

  std::cout << "analyze sweep seed=" << seed << " points=" << points.size()
            << " -> " << run_dir << '\n';
}

}  // namespace

std::pair<std::uint64_t, std::uint64_t> parse_seed_range(
    const std::string& text) {
  auto parse_one = [&text](const std::string& tok) -> std::uint64_t {
    if (tok.empty() || tok[0] == '-') {
      throw config_error("bad seed range '" + text + "'");
    }
    const char* begin = tok.c_str();
    char* end = nullptr;
    errno = 0;
    const unsigned long long v = std::strtoull(begin, &end, 10);
    if (end == begin || *end != '\0' || errno == ERANGE) {
      throw config_error("bad seed range '" + text + "'");
    }
    return static_cast<std::uint64_t>(v);
  };
  const auto dots = text.find("..");
  if (dots == std::string::npos) {
    const std::uint64_t s = parse_one(text);
    return {s, s};
  }
  const std::uint64_t a = parse_one(text.substr(0, dots));
  const std::uint64_t b = parse_one(text.substr(dots + 2));
  if (b < a) {
    throw config_error("bad seed range '" + text + "': end before start");
  }
  return {a, b};
}

int cmd_build_victim(const std::string& config_path) {
  const ExperimentConfig cfg = load_config(config_path);
  const std::string vdir = resolve_victim_dir(cfg);

  ManifestMeta meta;
  meta.command = "build-victim";
  meta.started_at = utc_timestamp();
  meta.input_sha256 = input_hash(cfg, nullptr);

  TrainConfig tc;
  tc.learning_rate = cfg.victim_learning_rate;
  tc.batch_size = cfg.victim_batch;
  tc.epochs = cfg.victim_epochs;
  const VictimBundle bundle =
      train_victim(cfg.env, cfg.victim_trajectories, tc,
                   stream_seed(cfg.seed, "victim-build"), cfg.victim_extras);

  ensure_dir(vdir);
  save_victim_bundle(bundle, vdir);
  meta.artifacts.assign(std::begin(kBundleFiles), std::end(kBundleFiles));
  write_manifest(vdir, cfg, meta);

  std::cout << "build-victim env=" << env_name(cfg.env.name)
            << " victim_return=" << g6(bundle.victim_return)
            << " expert_return=" << g6(bundle.expert_return) << " ratio="
            << g6(return_ratio(bundle.victim_return, bundle.expert_return,
                               cfg.env.r_min))
            << " reference_n=" << bundle.ref.sample_count << " -> " << vdir
            << '\n';
  return 0;
}

int cmd_attack(const std::string& config_path, const RunOptions& opt) {
  ExperimentConfig cfg = load_config(config_path);
  if (opt.defense.has_value()) cfg.defense_enabled = *opt.defense;
  if (opt.baseline.has_value()) cfg.attack_baseline = *opt.baseline;

  const std::string vdir = resolve_victim_dir(cfg);
  const VictimBundle bundle = load_bundle_checked(vdir);
  std::string label = (cfg.attack_baseline == "none")
                          ? "attack"
                          : "baseline-" + cfg.attack_baseline;
  if (cfg.defense_enabled) label += "-defended";
  for (const auto& [seed, run_dir] :
       expand_runs(run_root(cfg, label), cfg.seed, opt)) {
    run_attack_once(cfg, bundle, seed, run_dir, vdir);
  }
  return 0;
}

int cmd_analyze(const std::string& config_path, const RunOptions& opt) {
  ExperimentConfig cfg = load_config(config_path);
  if (opt.experiment.has_value()) cfg.analysis_experiment = *opt.experiment;

  const std::string vdir = resolve_victim_dir(cfg);
  const VictimBundle bundle = load_bundle_checked(vdir);
  for (const auto& [seed, run_dir] :
       expand_runs(run_root(cfg, cfg.analysis_experiment), cfg.seed, opt)) {
    if (cfg.analysis_experiment == "correlation") {
      run_correlation_once(cfg, bundle, seed, run_dir, vdir);
    } else {
      run_sweep_once(cfg, bundle, seed, run_dir, vdir);
    }
  }
  return 0;
}

}  // namespace lab
