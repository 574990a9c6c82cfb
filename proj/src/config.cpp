#include "lab/config.hpp"

#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lab/errors.hpp"
#include "lab/textio.hpp"

namespace lab {

namespace {

// ---------------------------------------------------------------------------
// SHA-256 (FIPS 180-4), self-contained so artifact hashing has no external
// dependency and identical bytes hash identically on every platform.
// ---------------------------------------------------------------------------

constexpr std::uint32_t kSha256K[64] = {
    0x428a2f98u, 0x71374491u, 0xb5c0fbcfu, 0xe9b5dba5u, 0x3956c25bu,
    0x59f111f1u, 0x923f82a4u, 0xab1c5ed5u, 0xd807aa98u, 0x12835b01u,
    0x243185beu, 0x550c7dc3u, 0x72be5d74u, 0x80deb1feu, 0x9bdc06a7u,
    0xc19bf174u, 0xe49b69c1u, 0xefbe4786u, 0x0fc19dc6u, 0x240ca1ccu,
    0x2de92c6fu, 0x4a7484aau, 0x5cb0a9dcu, 0x76f988dau, 0x983e5152u,
    0xa831c66du, 0xb00327c8u, 0xbf597fc7u, 0xc6e00bf3u, 0xd5a79147u,
    0x06ca6351u, 0x14292967u, 0x27b70a85u, 0x2e1b2138u, 0x4d2c6dfcu,
    0x53380d13u, 0x650a7354u, 0x766a0abbu, 0x81c2c92eu, 0x92722c85u,
    0xa2bfe8a1u, 0xa81a664bu, 0xc24b8b70u, 0xc76c51a3u, 0xd192e819u,
    0xd6990624u, 0xf40e3585u, 0x106aa070u, 0x19a4c116u, 0x1e376c08u,
    0x2748774cu, 0x34b0bcb5u, 0x391c0cb3u, 0x4ed8aa4au, 0x5b9cca4fu,
    0x682e6ff3u, 0x748f82eeu, 0x78a5636fu, 0x84c87814u, 0x8cc70208u,
    0x90befffau, 0xa4506cebu, 0xbef9a3f7u, 0xc67178f2u};

std::uint32_t rotr(std::uint32_t x, unsigned n) {
  return (x >> n) | (x << (32u - n));
}

void sha256_block(std::uint32_t state[8], const unsigned char* block) {
  std::uint32_t w[64];
  for (int i = 0; i < 16; ++i) {
    w[i] = (static_cast<std::uint32_t>(block[4 * i]) << 24) |
           (static_cast<std::uint32_t>(block[4 * i + 1]) << 16) |
           (static_cast<std::uint32_t>(block[4 * i + 2]) << 8) |
           static_cast<std::uint32_t>(block[4 * i + 3]);
  }
  for (int i = 16; i < 64; ++i) {
    const std::uint32_t s0 =
        rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
    const std::uint32_t s1 =
        rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
    w[i] = w[i - 16] + s0 + w[i - 7] + s1;
  }
  std::uint32_t a = state[0], b = state[1], c = state[2], d = state[3];
  std::uint32_t e = state[4], f = state[5], g = state[6], h = state[7];
  for (int i = 0; i < 64; ++i) {
    const std::uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
    const std::uint32_t ch = (e & f) ^ (~e & g);
    const std::uint32_t t1 = h + s1 + ch + kSha256K[i] + w[i];
    const std::uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
    const std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
    const std::uint32_t t2 = s0 + maj;
    h = g;
    g = f;
    f = e;
    e = d + t1;
    d = c;
    c = b;
    b = a;
    a = t1 + t2;
  }
  state[0] += a;
  state[1] += b;
  state[2] += c;
  state[3] += d;
  state[4] += e;
  state[5] += f;
  state[6] += g;
  state[7] += h;
}

// ---------------------------------------------------------------------------
// Scalar parsing helpers. All throw config_error carrying the source line.
// ---------------------------------------------------------------------------

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

double parse_double_token(const std::string& tok, const std::string& key,
                          int line) {
  const char* begin = tok.c_str();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0' || errno == ERANGE || !std::isfinite(v)) {
    throw config_error(key + ": expected a finite number, got '" + tok + "'",
                       line);
  }
  return v;
}

std::vector<std::string> split_tokens(std::string value) {
  for (auto& c : value) {
    if (c == ',') c = ' ';
  }
  std::vector<std::string> out;
  std::istringstream in(value);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

double parse_double(const std::string& value, const std::string& key,
                    int line) {
  const auto toks = split_tokens(value);
  if (toks.size() != 1) {
    throw config_error(key + ": expected a single number", line);
  }
  return parse_double_token(toks[0], key, line);
}

// Counts accept scientific notation (2e6) but must be non-negative integers
// small enough to round-trip through a double exactly.
std::size_t parse_count(const std::string& value, const std::string& key,
                        int line) {
  const double v = parse_double(value, key, line);
  if (v < 0.0 || v != std::floor(v) || v > 9.0e15) {
    throw config_error(key + ": expected a non-negative integer, got '" +
                           trim(value) + "'",
                       line);
  }
  return static_cast<std::size_t>(v);
}

int parse_count_int(const std::string& value, const std::string& key,
                    int line) {
  const std::size_t v = parse_count(value, key, line);
  if (v > 1000000000u) {
    throw config_error(key + ": value too large", line);
  }
  return static_cast<int>(v);
}

std::uint64_t parse_seed(const std::string& value, const std::string& key,
                         int line) {
  const std::string tok = trim(value);
  if (tok.empty() || tok[0] == '-') {
    throw config_error(key + ": expected an unsigned integer", line);
  }
  const char* begin = tok.c_str();
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(begin, &end, 10);
  if (end == begin || *end != '\0' || errno == ERANGE) {
    throw config_error(key + ": expected an unsigned integer, got '" + tok +
                           "'",
                       line);
  }
  return static_cast<std::uint64_t>(v);
}

bool parse_bool(const std::string& value, const std::string& key, int line) {
  const std::string tok = trim(value);
  if (tok == "true") return true;
  if (tok == "false") return false;
  throw config_error(key + ": expected true or false, got '" + tok + "'",
                     line);
}

std::vector<double> parse_vec_double(const std::string& value,
                                     const std::string& key, int line) {
  std::vector<double> out;
  for (const auto& tok : split_tokens(value)) {
    out.push_back(parse_double_token(tok, key, line));
  }
  return out;
}

std::vector<int> parse_vec_layers(const std::string& value,
                                  const std::string& key, int line) {
  std::vector<int> out;
  for (const auto& tok : split_tokens(value)) {
    const double v = parse_double_token(tok, key, line);
    if (v <= 0.0 || v != std::floor(v) || v > 1.0e6) {
      throw config_error(key + ": layer widths must be positive integers",
                         line);
    }
    out.push_back(static_cast<int>(v));
  }
  return out;
}

std::string parse_choice(const std::string& value, const std::string& key,
                         int line,
                         const std::vector<std::string>& allowed) {
  const std::string tok = trim(value);
  for (const auto& a : allowed) {
    if (tok == a) return tok;
  }
  std::string msg = key + ": expected one of {";
  for (std::size_t i = 0; i < allowed.size(); ++i) {
    if (i) msg += ", ";
    msg += allowed[i];
  }
  msg += "}, got '" + tok + "'";
  throw config_error(msg, line);
}

std::string parse_path(const std::string& value, const std::string& key,
                       int line) {
  const std::string tok = trim(value);
  if (tok.empty()) {
    throw config_error(key + ": path must not be empty", line);
  }
  return tok;
}

// ---------------------------------------------------------------------------
// Serialization helpers.
// ---------------------------------------------------------------------------

std::string join_doubles(const std::vector<double>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ' ';
    out += fmt17(xs[i]);
  }
  return out;
}

std::string join_ints(const std::vector<int>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(xs[i]);
  }
  return out;
}

struct Entry {
  int line = 0;
  std::string key;
  std::string value;
};

void apply_key(ExperimentConfig& cfg, const Entry& e) {
  const std::string& k = e.key;
  const std::string& v = e.value;
  const int ln = e.line;

  if (k == "seed") {
    cfg.seed = parse_seed(v, k, ln);
  } else if (k == "output_dir") {
    cfg.output_dir = parse_path(v, k, ln);

  } else if (k == "env.state_dim") {
    cfg.env.state_dim = parse_count_int(v, k, ln);
  } else if (k == "env.action_dim") {
    cfg.env.action_dim = parse_count_int(v, k, ln);
  } else if (k == "env.dt") {
    cfg.env.dt = parse_double(v, k, ln);
  } else if (k == "env.horizon") {
    cfg.env.horizon = parse_count_int(v, k, ln);
  } else if (k == "env.encode_scale") {
    cfg.env.encode_scale = parse_vec_double(v, k, ln);
  } else if (k == "env.encode_offset") {
    cfg.env.encode_offset = parse_vec_double(v, k, ln);
  } else if (k == "env.init_low") {
    cfg.env.init_low = parse_vec_double(v, k, ln);
  } else if (k == "env.init_high") {
    cfg.env.init_high = parse_vec_double(v, k, ln);
  } else if (k == "env.spring_kappa") {
    cfg.env.spring_kappa = parse_double(v, k, ln);
  } else if (k == "env.spring_damping") {
    cfg.env.spring_damping = parse_double(v, k, ln);
  } else if (k == "env.gain_pos") {
    cfg.env.gain_pos = parse_double(v, k, ln);
  } else if (k == "env.gain_vel") {
    cfg.env.gain_vel = parse_double(v, k, ln);
  } else if (k == "env.r_min") {
    cfg.env.r_min = parse_double(v, k, ln);

  } else if (k == "victim.dir") {
    cfg.victim_dir = parse_path(v, k, ln);
  } else if (k == "victim.trajectories") {
    cfg.victim_trajectories = parse_count(v, k, ln);
  } else if (k == "victim.hidden") {
    cfg.victim_extras.hidden = parse_vec_layers(v, k, ln);
  } else if (k == "victim.epochs") {
    cfg.victim_epochs = parse_count_int(v, k, ln);
  } else if (k == "victim.batch") {
    cfg.victim_batch = parse_count(v, k, ln);
  } else if (k == "victim.learning_rate") {
    cfg.victim_learning_rate = parse_double(v, k, ln);
  } else if (k == "victim.sigma_explore") {
    cfg.victim_extras.sigma_explore = parse_double(v, k, ln);
  } else if (k == "victim.eval_episodes") {
    cfg.victim_extras.eval_episodes = parse_count(v, k, ln);
  } else if (k == "victim.competence_ratio") {
    cfg.victim_extras.competence_ratio = parse_double(v, k, ln);
  } else if (k == "victim.val_target") {
    cfg.victim_extras.val_target = parse_double(v, k, ln);
  } else if (k == "victim.min_visited") {
    cfg.victim_extras.min_visited = parse_count(v, k, ln);

  } else if (k == "attack.total") {
    cfg.attack.budget.total = parse_count(v, k, ln);
  } else if (k == "attack.reserved") {
    cfg.attack.budget.reserved = parse_count(v, k, ln);
  } else if (k == "attack.base") {
    cfg.attack.budget.base = parse_count(v, k, ln);
  } else if (k == "attack.attacker") {
    cfg.attack.budget.attacker = parse_count(v, k, ln);
  } else if (k == "attack.epochs_per_iter") {
    cfg.attack.epochs_per_iter = parse_count_int(v, k, ln);
  } else if (k == "attack.init") {
    cfg.attack_init = parse_choice(v, k, ln, {"standard", "shifted3sigma"});
  } else if (k == "attack.baseline") {
    cfg.attack_baseline = parse_choice(
        v, k, ln, {"none", "random1", "random10", "random100", "reffit"});
  } else if (k == "attack.fixed_evaluator_budget") {
    cfg.attack.fixed_evaluator_budget = parse_bool(v, k, ln);
  } else if (k == "attack.use_reward_model") {
    cfg.attack.use_reward_model = parse_bool(v, k, ln);
  } else if (k == "attack.prune") {
    cfg.attack.prune = parse_bool(v, k, ln);
  } else if (k == "attack.dynamic_bc_budget") {
    cfg.attack.dynamic_bc_budget = parse_bool(v, k, ln);
  } else if (k == "attack.attacker_hidden") {
    cfg.attack.attacker_hidden = parse_vec_layers(v, k, ln);
  } else if (k == "attack.evaluator_hidden") {
    cfg.attack.evaluator_hidden = parse_vec_layers(v, k, ln);
  } else if (k == "attack.reward_hidden") {
    cfg.attack.reward_hidden = parse_vec_layers(v, k, ln);
  } else if (k == "attack.activation") {
    const std::string a = parse_choice(v, k, ln, {"tanh", "relu"});
    cfg.attack.hidden_activation =
        (a == "tanh") ? Activation::tanh : Activation::relu;
  } else if (k == "attack.learning_rate") {
    cfg.attack.learning_rate = parse_double(v, k, ln);
  } else if (k == "attack.batch") {
    cfg.attack.batch_size = parse_count(v, k, ln);
  } else if (k == "attack.reward_steps") {
    cfg.attack.reward_steps = parse_count_int(v, k, ln);
  } else if (k == "attack.reward_learning_rate") {
    cfg.attack.reward_learning_rate = parse_double(v, k, ln);
  } else if (k == "attack.reward_batch") {
    cfg.attack.reward_batch = parse_count(v, k, ln);
  } else if (k == "attack.demand_floor") {
    cfg.attack.demand_floor = parse_count(v, k, ln);
  } else if (k == "attack.final_epochs") {
    cfg.attack.final_train.epochs = parse_count_int(v, k, ln);
  } else if (k == "attack.final_patience") {
    const int p = parse_count_int(v, k, ln);
    if (p == 0) {
      cfg.attack.final_train.early_stop_patience.reset();
    } else {
      cfg.attack.final_train.early_stop_patience = p;
    }
  } else if (k == "attack.final_batch") {
    cfg.attack.final_train.batch_size = parse_count(v, k, ln);
  } else if (k == "attack.final_learning_rate") {
    cfg.attack.final_train.learning_rate = parse_double(v, k, ln);
  } else if (k == "attack.eval_episodes") {
    cfg.attack.eval_episodes = parse_count(v, k, ln);

  } else if (k == "defense.enabled") {
    cfg.defense_enabled = parse_bool(v, k, ln);

  } else if (k == "analysis.experiment") {
    cfg.analysis_experiment =
        parse_choice(v, k, ln, {"correlation", "sweep"});
  } else if (k == "analysis.count") {
    cfg.analysis_count = parse_count(v, k, ln);
  } else if (k == "analysis.points_per_dist") {
    cfg.analysis_points_per_dist = parse_count(v, k, ln);
  } else if (k == "analysis.hidden") {
    cfg.analysis_hidden = parse_vec_layers(v, k, ln);
  } else if (k == "analysis.batch") {
    cfg.analysis_batch = parse_count(v, k, ln);
  } else if (k == "analysis.learning_rate") {
    cfg.analysis_learning_rate = parse_double(v, k, ln);
  } else if (k == "analysis.queries_per_point") {
    cfg.analysis_queries_per_point = parse_count(v, k, ln);
  } else if (k == "analysis.lambda_list") {
    cfg.analysis_lambda_list = parse_vec_double(v, k, ln);
  } else if (k == "analysis.z_list") {
    cfg.analysis_z_list = parse_vec_double(v, k, ln);

  } else {
    throw config_error("unknown key '" + k + "'", ln);
  }
}

}  // namespace

ExperimentConfig::ExperimentConfig()
    : env(linear_reach_spec()) {
  // Short-horizon desk envs need thousands of episodes before the visited
  // state corpus clears the reference-fit floor.
  victim_trajectories = 4000;
  victim_extras.hidden = {128, 128};
  attack.budget = BudgetParams{2000000, 200000, 20000, 0};
  attack.attacker_hidden = {64, 64};
  attack.evaluator_hidden = {64, 64};
  attack.reward_hidden = {64, 64};
  attack.batch_size = 256;
  attack.reward_batch = 256;
  attack.reward_steps = 400;
  attack.demand_floor = 100;
  attack.final_train.epochs = 40;
  attack.final_train.early_stop_patience = 20;
  attack.final_train.batch_size = 512;
  attack.final_train.learning_rate = 1e-3;
  attack.eval_episodes = 8;
}

std::string sha256_hex(const std::string& bytes) {
  std::uint32_t state[8] = {0x6a09e667u, 0xbb67ae85u, 0x3c6ef372u,
                            0xa54ff53au, 0x510e527fu, 0x9b05688cu,
                            0x1f83d9abu, 0x5be0cd19u};
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();
  std::size_t i = 0;
  for (; i + 64 <= n; i += 64) sha256_block(state, data + i);

  unsigned char tail[128] = {0};
  const std::size_t rest = n - i;
  std::memcpy(tail, data + i, rest);
  tail[rest] = 0x80;
  const std::size_t tail_len = (rest < 56) ? 64 : 128;
  const std::uint64_t bits = static_cast<std::uint64_t>(n) * 8u;
  for (int b = 0; b < 8; ++b) {
    tail[tail_len - 1 - b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xffu);
  }
  sha256_block(state, tail);
  if (tail_len == 128) sha256_block(state, tail + 64);

  static const char* hex = "0123456789abcdef";
  std::string out(64, '0');
  for (int w = 0; w < 8; ++w) {
    for (int b = 0; b < 4; ++b) {
      const unsigned byte = (state[w] >> (8 * (3 - b))) & 0xffu;
      out[8 * w + 2 * b] = hex[byte >> 4];
      out[8 * w + 2 * b + 1] = hex[byte & 0xfu];
    }
  }
  return out;
}

ExperimentConfig parse_config(const std::string& text) {
  std::vector<Entry> entries;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw = raw.substr(0, hash);
    const std::string stripped = trim(raw);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw config_error("expected 'key = value'", line);
    }
    Entry e;
    e.line = line;
    e.key = trim(stripped.substr(0, eq));
    e.value = trim(stripped.substr(eq + 1));
    if (e.key.empty()) throw config_error("empty key", line);
    if (!seen.insert(e.key).second) {
      throw config_error("duplicate key '" + e.key + "'", line);
    }
    entries.push_back(std::move(e));
  }

  ExperimentConfig cfg;
  // env.name first so a preset switch cannot clobber explicit env overrides
  // regardless of where the keys sit in the file.
  for (const auto& e : entries) {
    if (e.key == "env.name") {
      const std::string name =
          parse_choice(e.value, e.key, e.line, {"linear_reach", "damped_spring"});
      cfg.env = (name == "linear_reach") ? linear_reach_spec()
                                         : damped_spring_spec();
    }
  }
  for (const auto& e : entries) {
    if (e.key != "env.name") apply_key(cfg, e);
  }

  try {
    validate_env(cfg.env);
  } catch (const error& err) {
    throw config_error(std::string("invalid environment: ") + err.what(), 0);
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw format_error("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  auto put = [&out](const std::string& key, const std::string& value) {
    out << key << " =" << (value.empty() ? "" : " ") << value << '\n';
  };
  put("seed", std::to_string(cfg.seed));
  put("output_dir", cfg.output_dir);

  put("env.name", env_name(cfg.env.name));
  put("env.state_dim", std::to_string(cfg.env.state_dim));
  put("env.action_dim", std::to_string(cfg.env.action_dim));
  put("env.dt", fmt17(cfg.env.dt));
  put("env.horizon", std::to_string(cfg.env.horizon));
  put("env.encode_scale", join_doubles(cfg.env.encode_scale));
  put("env.encode_offset", join_doubles(cfg.env.encode_offset));
  put("env.init_low", join_doubles(cfg.env.init_low));
  put("env.init_high", join_doubles(cfg.env.init_high));
  put("env.spring_kappa", fmt17(cfg.env.spring_kappa));
  put("env.spring_damping", fmt17(cfg.env.spring_damping));
  put("env.gain_pos", fmt17(cfg.env.gain_pos));
  put("env.gain_vel", fmt17(cfg.env.gain_vel));
  put("env.r_min", fmt17(cfg.env.r_min));

  put("victim.dir", cfg.victim_dir);
  put("victim.trajectories", std::to_string(cfg.victim_trajectories));
  put("victim.hidden", join_ints(cfg.victim_extras.hidden));
  put("victim.epochs", std::to_string(cfg.victim_epochs));
  put("victim.batch", std::to_string(cfg.victim_batch));
  put("victim.learning_rate", fmt17(cfg.victim_learning_rate));
  put("victim.sigma_explore", fmt17(cfg.victim_extras.sigma_explore));
  put("victim.eval_episodes", std::to_string(cfg.victim_extras.eval_episodes));
  put("victim.competence_ratio", fmt17(cfg.victim_extras.competence_ratio));
  put("victim.val_target", fmt17(cfg.victim_extras.val_target));
  put("victim.min_visited", std::to_string(cfg.victim_extras.min_visited));

  put("attack.total", std::to_string(cfg.attack.budget.total));
  put("attack.reserved", std::to_string(cfg.attack.budget.reserved));
  put("attack.base", std::to_string(cfg.attack.budget.base));
  put("attack.attacker", std::to_string(cfg.attack.budget.attacker));
  put("attack.epochs_per_iter", std::to_string(cfg.attack.epochs_per_iter));
  put("attack.init", cfg.attack_init);
  put("attack.baseline", cfg.attack_baseline);
  put("attack.fixed_evaluator_budget",
      cfg.attack.fixed_evaluator_budget ? "true" : "false");
  put("attack.use_reward_model", cfg.attack.use_reward_model ? "true" : "false");
  put("attack.prune", cfg.attack.prune ? "true" : "false");
  put("attack.dynamic_bc_budget",
      cfg.attack.dynamic_bc_budget ? "true" : "false");
  put("attack.attacker_hidden", join_ints(cfg.attack.attacker_hidden));
  put("attack.evaluator_hidden", join_ints(cfg.attack.evaluator_hidden));
  put("attack.reward_hidden", join_ints(cfg.attack.reward_hidden));
  put("attack.activation", activation_name(cfg.attack.hidden_activation));
  put("attack.learning_rate", fmt17(cfg.attack.learning_rate));
  put("attack.batch", std::to_string(cfg.attack.batch_size));
  put("attack.reward_steps", std::to_string(cfg.attack.reward_steps));
  put("attack.reward_learning_rate",
      fmt17(cfg.attack.reward_learning_rate));
  put("attack.reward_batch", std::to_string(cfg.attack.reward_batch));
  put("attack.demand_floor", std::to_string(cfg.attack.demand_floor));
  put("attack.final_epochs", std::to_string(cfg.attack.final_train.epochs));
  put("attack.final_patience",
      std::to_string(cfg.attack.final_train.early_stop_patience.value_or(0)));
  put("attack.final_batch",
      std::to_string(cfg.attack.final_train.batch_size));
  put("attack.final_learning_rate",
      fmt17(cfg.attack.final_train.learning_rate));
  put("attack.eval_episodes", std::to_string(cfg.attack.eval_episodes));

  put("defense.enabled", cfg.defense_enabled ? "true" : "false");

  put("analysis.experiment", cfg.analysis_experiment);
  put("analysis.count", std::to_string(cfg.analysis_count));
  put("analysis.points_per_dist",
      std::to_string(cfg.analysis_points_per_dist));
  put("analysis.hidden", join_ints(cfg.analysis_hidden));
  put("analysis.batch", std::to_string(cfg.analysis_batch));
  put("analysis.learning_rate", fmt17(cfg.analysis_learning_rate));
  put("analysis.queries_per_point",
      std::to_string(cfg.analysis_queries_per_point));
  put("analysis.lambda_list", join_doubles(cfg.analysis_lambda_list));
  put("analysis.z_list", join_doubles(cfg.analysis_z_list));
  return out.str();
}

std::string effective_output_dir(const ExperimentConfig& cfg) {
  const char* root = std::getenv("POLICYLAB_OUTPUT_ROOT");
  if (root == nullptr || root[0] == '\0' ||
      std::filesystem::path(cfg.output_dir).is_absolute()) {
    return cfg.output_dir;
  }
  return (std::filesystem::path(root) / cfg.output_dir).string();
}

std::string resolve_victim_dir(const ExperimentConfig& cfg) {
  if (std::filesystem::path(cfg.victim_dir).is_absolute()) {
    return cfg.victim_dir;
  }
  return (std::filesystem::path(effective_output_dir(cfg)) / cfg.victim_dir)
      .string();
}

std::string manifest_text(const ExperimentConfig& cfg,
                          const ManifestMeta& meta) {
  std::ostringstream out;
  out << "# policylab manifest: feed this file back as the config to "
         "reproduce the run\n";
  out << "# command = " << meta.command << '\n';
  out << "# tool = " << kToolVersion << '\n';
  out << "# started_at = " << meta.started_at << '\n';
  out << "# finished_at = " << meta.finished_at << '\n';
  for (const auto& a : meta.artifacts) {
    out << "# artifact = " << a << '\n';
  }
  out << "# input_sha256 = " << meta.input_sha256 << '\n';
  out << serialize_config(cfg);
  return out.str();
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

}  // namespace lab
