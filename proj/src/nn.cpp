#include "lab/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "lab/errors.hpp"
#include "lab/linalg.hpp"

namespace lab {

namespace {

constexpr int kModelFormatVersion = 1;

double apply_act(double z, Activation a) {
  switch (a) {
    case Activation::identity: return z;
    case Activation::relu: return z > 0.0 ? z : 0.0;
    case Activation::tanh: return std::tanh(z);
    case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-z));
  }
  return z;
}

// Derivative expressed through the post-activation value.
double act_deriv(double y, Activation a) {
  switch (a) {
    case Activation::identity: return 1.0;
    case Activation::relu: return y > 0.0 ? 1.0 : 0.0;
    case Activation::tanh: return 1.0 - y * y;
    case Activation::sigmoid: return y * (1.0 - y);
  }
  return 1.0;
}

void check_input_dim(const MlpModel& m, std::size_t got) {
  if (got != static_cast<std::size_t>(m.input_dim())) {
    throw shape_error("mlp_forward: input length " + std::to_string(got) +
                      " does not match model input dimension " +
                      std::to_string(m.input_dim()));
  }
}

// Post-activation values of every layer; acts[0] is the standardized input.
struct FwdCache {
  std::vector<std::vector<double>> acts;
};

void standardize_rows(const MlpModel& m, const double* x, std::size_t n_rows,
                      std::vector<double>& out) {
  const std::size_t in = static_cast<std::size_t>(m.input_dim());
  out.assign(x, x + n_rows * in);
  if (m.input_shift.empty()) return;
  for (std::size_t r = 0; r < n_rows; ++r) {
    double* row = out.data() + r * in;
    for (std::size_t j = 0; j < in; ++j) {
      row[j] = (row[j] - m.input_shift[j]) / m.input_scale[j];
    }
  }
}

void forward_cached(const MlpModel& m, const double* x, std::size_t n_rows,
                    FwdCache& c) {
  const std::size_t layers = m.layer_count();
  c.acts.resize(layers + 1);
  standardize_rows(m, x, n_rows, c.acts[0]);
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = static_cast<std::size_t>(m.layer_dims[l]);
    const std::size_t out = static_cast<std::size_t>(m.layer_dims[l + 1]);
    auto& z = c.acts[l + 1];
    z.resize(n_rows * out);
    linalg::matmul(c.acts[l].data(), m.weights[l].data(), z.data(), n_rows, in,
                   out, false, true);
    const Activation act =
        l + 1 == layers ? m.output_activation : m.hidden_activation;
    for (std::size_t r = 0; r < n_rows; ++r) {
      double* row = z.data() + r * out;
      for (std::size_t j = 0; j < out; ++j) {
        row[j] = apply_act(row[j] + m.biases[l][j], act);
      }
    }
  }
}

// Backward from the output layer's PRE-activation gradient dl_dz
// (n_rows x out), accumulating into g.
void backward_from_logits(const MlpModel& m, const FwdCache& c,
                          std::vector<double> delta, std::size_t n_rows,
                          ParamGrads& g) {
  const std::size_t layers = m.layer_count();
  std::vector<double> prev;
  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t in = static_cast<std::size_t>(m.layer_dims[l]);
    const std::size_t out = static_cast<std::size_t>(m.layer_dims[l + 1]);
    linalg::matmul(delta.data(), c.acts[l].data(), g.w[l].data(), out, n_rows,
                   in, true, false, true);
    for (std::size_t r = 0; r < n_rows; ++r) {
      const double* row = delta.data() + r * out;
      for (std::size_t j = 0; j < out; ++j) g.b[l][j] += row[j];
    }
    if (l == 0) break;
    prev.resize(n_rows * in);
    linalg::matmul(delta.data(), m.weights[l].data(), prev.data(), n_rows, out,
                   in, false, false);
    for (std::size_t r = 0; r < n_rows; ++r) {
      double* row = prev.data() + r * in;
      const double* act_row = c.acts[l].data() + r * in;
      for (std::size_t j = 0; j < in; ++j) {
        row[j] *= act_deriv(act_row[j], m.hidden_activation);
      }
    }
    delta.swap(prev);
  }
}

double clamp_prob(double p) {
  return std::clamp(p, kRewardClamp, 1.0 - kRewardClamp);
}

}  // namespace

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
  }
  return "identity";
}

Activation activation_from_name(const std::string& name) {
  if (name == "identity") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "sigmoid") return Activation::sigmoid;
  throw format_error("unknown activation name: " + name);
}

MlpModel make_mlp(const std::vector<int>& layer_dims, Activation hidden,
                  Activation output, Rng& rng) {
  if (layer_dims.size() < 2) throw shape_error("make_mlp: need at least two layer dims");
  for (int d : layer_dims) {
    if (d <= 0) throw shape_error("make_mlp: layer dims must be positive");
  }
  MlpModel m;
  m.layer_dims = layer_dims;
  m.hidden_activation = hidden;
  m.output_activation = output;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const std::size_t in = static_cast<std::size_t>(layer_dims[l]);
    const std::size_t out = static_cast<std::size_t>(layer_dims[l + 1]);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::vector<double> w(out * in), b(out);
    for (double& x : w) x = rng.uniform(-bound, bound);
    for (double& x : b) x = rng.uniform(-bound, bound);
    m.weights.push_back(std::move(w));
    m.biases.push_back(std::move(b));
  }
  return m;
}

void set_input_standardization(MlpModel& m, const double* rows,
                               std::size_t n_rows) {
  if (n_rows == 0) throw degenerate_error("set_input_standardization: no rows");
  const std::size_t in = static_cast<std::size_t>(m.input_dim());
  std::vector<double> mean(in, 0.0), var(in, 0.0);
  for (std::size_t r = 0; r < n_rows; ++r) {
    for (std::size_t j = 0; j < in; ++j) mean[j] += rows[r * in + j];
  }
  for (double& v : mean) v /= static_cast<double>(n_rows);
  for (std::size_t r = 0; r < n_rows; ++r) {
    for (std::size_t j = 0; j < in; ++j) {
      const double d = rows[r * in + j] - mean[j];
      var[j] += d * d;
    }
  }
  m.input_shift = std::move(mean);
  m.input_scale.resize(in);
  for (std::size_t j = 0; j < in; ++j) {
    const double sd = std::sqrt(var[j] / static_cast<double>(n_rows));
    m.input_scale[j] = sd > 0.0 ? sd : 1.0;
  }
}

void fold_input_transform(MlpModel& m) {
  if (m.input_shift.empty()) return;
  const std::size_t in = static_cast<std::size_t>(m.layer_dims[0]);
  const std::size_t out = static_cast<std::size_t>(m.layer_dims[1]);
  for (std::size_t o = 0; o < out; ++o) {
    double shift_term = 0.0;
    for (std::size_t j = 0; j < in; ++j) {
      double& w = m.weights[0][o * in + j];
      w /= m.input_scale[j];
      shift_term += w * m.input_shift[j];
    }
    m.biases[0][o] -= shift_term;
  }
  m.input_shift.clear();
  m.input_scale.clear();
}

std::vector<double> mlp_forward(const MlpModel& m, const std::vector<double>& input) {
  check_input_dim(m, input.size());
  FwdCache c;
  forward_cached(m, input.data(), 1, c);
  return c.acts.back();
}

void mlp_forward_batch(const MlpModel& m, const double* x, std::size_t n_rows,
                       double* y) {
  FwdCache c;
  forward_cached(m, x, n_rows, c);
  std::copy(c.acts.back().begin(), c.acts.back().end(), y);
}

ParamGrads zero_grads(const MlpModel& m) {
  ParamGrads g;
  for (std::size_t l = 0; l < m.layer_count(); ++l) {
    g.w.emplace_back(m.weights[l].size(), 0.0);
    g.b.emplace_back(m.biases[l].size(), 0.0);
  }
  return g;
}

AdamState make_adam_state(const MlpModel& m) {
  AdamState s;
  for (std::size_t l = 0; l < m.layer_count(); ++l) {
    s.m_w.emplace_back(m.weights[l].size(), 0.0);
    s.v_w.emplace_back(m.weights[l].size(), 0.0);
    s.m_b.emplace_back(m.biases[l].size(), 0.0);
    s.v_b.emplace_back(m.biases[l].size(), 0.0);
  }
  return s;
}

std::vector<double> mlp_backward(const MlpModel& m, const double* x,
                                 std::size_t n_rows, const double* dl_dy,
                                 ParamGrads& g) {
  FwdCache c;
  forward_cached(m, x, n_rows, c);
  const std::size_t out = static_cast<std::size_t>(m.output_dim());
  std::vector<double> delta(n_rows * out);
  for (std::size_t i = 0; i < delta.size(); ++i) {
    delta[i] = dl_dy[i] * act_deriv(c.acts.back()[i], m.output_activation);
  }
  backward_from_logits(m, c, std::move(delta), n_rows, g);
  return c.acts.back();
}

std::pair<double, std::vector<double>> huber_loss(const std::vector<double>& pred,
                                                  const std::vector<double>& target) {
  if (pred.size() != target.size()) {
    throw shape_error("huber_loss: length mismatch");
  }
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  double loss = 0.0;
  std::vector<double> grad(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    if (std::abs(d) < 1.0) {
      loss += 0.5 * d * d;
      grad[i] = d * inv_n;
    } else {
      loss += std::abs(d) - 0.5;
      grad[i] = (d > 0.0 ? 1.0 : -1.0) * inv_n;
    }
  }
  return {loss * inv_n, std::move(grad)};
}

void adam_step(MlpModel& m, const ParamGrads& g, AdamState& s, double lr,
               double beta1, double beta2, double epsilon) {
  s.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(s.step));
  auto update = [&](std::vector<double>& p, const std::vector<double>& grad,
                    std::vector<double>& mo, std::vector<double>& vo) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = grad[i];
      if (!std::isfinite(gi)) throw numeric_error("adam_step: non-finite gradient");
      mo[i] = beta1 * mo[i] + (1.0 - beta1) * gi;
      vo[i] = beta2 * vo[i] + (1.0 - beta2) * gi * gi;
      const double mhat = mo[i] / bc1;
      const double vhat = vo[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + epsilon);
    }
  };
  for (std::size_t l = 0; l < m.layer_count(); ++l) {
    update(m.weights[l], g.w[l], s.m_w[l], s.v_w[l]);
    update(m.biases[l], g.b[l], s.m_b[l], s.v_b[l]);
  }
}

namespace {

void gather_rows(const std::vector<double>& src, std::size_t width,
                 const std::vector<std::size_t>& idx, std::size_t begin,
                 std::size_t count, std::vector<double>& out) {
  out.resize(count * width);
  for (std::size_t r = 0; r < count; ++r) {
    const double* row = src.data() + idx[begin + r] * width;
    std::copy(row, row + width, out.data() + r * width);
  }
}

// Mean Huber loss over rows held in contiguous matrices.
double matrix_loss(const MlpModel& m, const std::vector<double>& x,
                   const std::vector<double>& t, std::size_t n_rows,
                   std::size_t batch) {
  const std::size_t out = static_cast<std::size_t>(m.output_dim());
  const std::size_t in = static_cast<std::size_t>(m.input_dim());
  std::vector<double> y;
  double total = 0.0;
  for (std::size_t start = 0; start < n_rows; start += batch) {
    const std::size_t n = std::min(batch, n_rows - start);
    y.resize(n * out);
    mlp_forward_batch(m, x.data() + start * in, n, y.data());
    for (std::size_t i = 0; i < n * out; ++i) {
      const double d = y[i] - t[start * out + i];
      total += std::abs(d) < 1.0 ? 0.5 * d * d : std::abs(d) - 0.5;
    }
  }
  return total / (static_cast<double>(n_rows) * static_cast<double>(out));
}

}  // namespace

BcResult behavioral_cloning(const TransferDataset& data, MlpModel model,
                            std::size_t demand, const TrainConfig& cfg) {
  if (data.size() == 0) throw degenerate_error("behavioral_cloning: empty dataset");
  if (demand == 0 || demand > data.size()) {
    throw degenerate_error("behavioral_cloning: demand " + std::to_string(demand) +
                           " outside dataset size " + std::to_string(data.size()));
  }
  const std::size_t in = data.state_dim;
  const std::size_t out = data.action_dim;
  if (in != static_cast<std::size_t>(model.input_dim()) ||
      out != static_cast<std::size_t>(model.output_dim())) {
    throw shape_error("behavioral_cloning: model/dataset dimension mismatch");
  }

  Rng rng(cfg.seed);
  const auto idx = sample_indices(rng, data.size(), demand);
  const auto val_count = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(cfg.val_fraction * static_cast<double>(demand))));
  if (val_count >= demand) {
    throw degenerate_error("behavioral_cloning: demand too small for a train/val split");
  }
  const std::size_t train_count = demand - val_count;

  std::vector<double> xtr, ytr, xva, yva;
  gather_rows(data.states, in, idx, 0, train_count, xtr);
  gather_rows(data.actions, out, idx, 0, train_count, ytr);
  gather_rows(data.states, in, idx, train_count, val_count, xva);
  gather_rows(data.actions, out, idx, train_count, val_count, yva);

  if (model.input_shift.empty()) {
    set_input_standardization(model, xtr.data(), train_count);
  }

  AdamState adam = make_adam_state(model);
  std::vector<std::size_t> order(train_count);
  for (std::size_t i = 0; i < train_count; ++i) order[i] = i;

  double best_val = std::numeric_limits<double>::infinity();
  MlpModel best_model;
  int no_improve = 0;
  int epochs_run = 0;

  std::vector<double> xb, tb;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < train_count; start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, train_count - start);
      xb.resize(n * in);
      tb.resize(n * out);
      for (std::size_t r = 0; r < n; ++r) {
        const std::size_t s = order[start + r];
        std::copy(xtr.data() + s * in, xtr.data() + (s + 1) * in, xb.data() + r * in);
        std::copy(ytr.data() + s * out, ytr.data() + (s + 1) * out, tb.data() + r * out);
      }
      ParamGrads g = zero_grads(model);
      FwdCache c;
      forward_cached(model, xb.data(), n, c);
      const auto& pred = c.acts.back();
      const double scale = 1.0 / (static_cast<double>(n) * static_cast<double>(out));
      std::vector<double> delta(n * out);
      for (std::size_t i = 0; i < n * out; ++i) {
        const double d = pred[i] - tb[i];
        const double grad = std::abs(d) < 1.0 ? d : (d > 0.0 ? 1.0 : -1.0);
        delta[i] = grad * scale * act_deriv(pred[i], model.output_activation);
      }
      backward_from_logits(model, c, std::move(delta), n, g);
      adam_step(model, g, adam, cfg.learning_rate, cfg.adam_beta1,
                cfg.adam_beta2, cfg.adam_epsilon);
    }
    ++epochs_run;
    if (cfg.early_stop_patience || cfg.val_target) {
      const double val = matrix_loss(model, xva, yva, val_count, cfg.batch_size);
      if (val < best_val) {
        best_val = val;
        if (cfg.early_stop_patience) best_model = model;
        no_improve = 0;
      } else if (cfg.early_stop_patience &&
                 ++no_improve >= *cfg.early_stop_patience) {
        break;
      }
      if (cfg.val_target && val < *cfg.val_target) break;
    }
  }
  if (cfg.early_stop_patience && best_model.layer_count() > 0) {
    model = std::move(best_model);
  }

  BcResult res;
  res.val_loss = matrix_loss(model, xva, yva, val_count, cfg.batch_size);
  res.model = std::move(model);
  res.epochs_run = epochs_run;
  return res;
}

double validation_loss(const MlpModel& m, const TransferDataset& valset) {
  if (valset.size() == 0) throw degenerate_error("validation_loss: empty dataset");
  return matrix_loss(m, valset.states, valset.actions, valset.size(), 4096);
}

std::vector<double> per_pair_losses(const MlpModel& m, const TransferDataset& d) {
  const std::size_t out = d.action_dim;
  std::vector<double> y(d.size() * out);
  mlp_forward_batch(m, d.states.data(), d.size(), y.data());
  std::vector<double> losses(d.size());
  for (std::size_t r = 0; r < d.size(); ++r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < out; ++j) {
      const double diff = y[r * out + j] - d.actions[r * out + j];
      acc += std::abs(diff) < 1.0 ? 0.5 * diff * diff : std::abs(diff) - 0.5;
    }
    losses[r] = acc / static_cast<double>(out);
  }
  return losses;
}

double reward_forward(const MlpModel& reward, const std::vector<double>& state,
                      const std::vector<double>& action) {
  if (state.size() + action.size() != static_cast<std::size_t>(reward.input_dim())) {
    throw shape_error("reward_forward: state+action length mismatch");
  }
  std::vector<double> input(state);
  input.insert(input.end(), action.begin(), action.end());
  return mlp_forward(reward, input).front();
}

MlpModel train_reward(const TransferDataset& d_a, const TransferDataset& d_v,
                      MlpModel reward, const RewardTrainOptions& opt) {
  if (d_a.size() == 0 || d_v.size() == 0) {
    throw degenerate_error("train_reward: empty dataset");
  }
  const std::size_t n = d_v.state_dim;
  const std::size_t k = d_v.action_dim;
  if (n + k != static_cast<std::size_t>(reward.input_dim())) {
    throw shape_error("train_reward: reward input dimension must be state+action");
  }

  Rng rng(opt.seed);
  const std::size_t demand = std::min(opt.demand, d_v.size());
  if (demand < 2) throw degenerate_error("train_reward: demand too small");
  const auto idx = sample_indices(rng, d_v.size(), demand);
  const auto val_count = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(opt.val_fraction * static_cast<double>(demand))));
  const std::size_t train_count = demand - std::min(demand - 1, val_count);

  // Victim train split as concatenated (state, action) rows, pruned of
  // saturated actions unless disabled.
  std::vector<double> vt;
  vt.reserve(train_count * (n + k));
  for (std::size_t r = 0; r < train_count; ++r) {
    const double* s = d_v.state(idx[r]);
    const double* a = d_v.action(idx[r]);
    if (opt.prune) {
      bool saturated = false;
      for (std::size_t j = 0; j < k; ++j) {
        if (a[j] == 1.0 || a[j] == -1.0) {
          saturated = true;
          break;
        }
      }
      if (saturated) continue;
    }
    vt.insert(vt.end(), s, s + n);
    vt.insert(vt.end(), a, a + k);
  }
  const std::size_t n_vt = vt.size() / (n + k);
  if (n_vt == 0) {
    throw degenerate_error("train_reward: pruning left the victim train split empty");
  }

  std::vector<double> at;
  at.reserve(d_a.size() * (n + k));
  for (std::size_t r = 0; r < d_a.size(); ++r) {
    at.insert(at.end(), d_a.state(r), d_a.state(r) + n);
    at.insert(at.end(), d_a.action(r), d_a.action(r) + k);
  }
  const std::size_t n_at = d_a.size();

  if (reward.input_shift.empty()) {
    set_input_standardization(reward, vt.data(), n_vt);
  }

  AdamState adam = make_adam_state(reward);
  std::vector<double> xv, xa;
  for (int step = 0; step < opt.steps; ++step) {
    const std::size_t bv = std::min(opt.batch_size, n_vt);
    const std::size_t ba = std::min(opt.batch_size, n_at);
    xv.resize(bv * (n + k));
    xa.resize(ba * (n + k));
    for (std::size_t r = 0; r < bv; ++r) {
      const double* row = vt.data() + rng.below(n_vt) * (n + k);
      std::copy(row, row + n + k, xv.data() + r * (n + k));
    }
    for (std::size_t r = 0; r < ba; ++r) {
      const double* row = at.data() + rng.below(n_at) * (n + k);
      std::copy(row, row + n + k, xa.data() + r * (n + k));
    }

    ParamGrads g = zero_grads(reward);
    // Victim side: minimize mean -log(1 - R); d/dlogit = R / batch.
    {
      FwdCache c;
      forward_cached(reward, xv.data(), bv, c);
      std::vector<double> delta(bv);
      for (std::size_t i = 0; i < bv; ++i) {
        delta[i] = c.acts.back()[i] / static_cast<double>(bv);
      }
      backward_from_logits(reward, c, std::move(delta), bv, g);
    }
    // Attacker side: minimize mean -log(R); d/dlogit = (R - 1) / batch.
    {
      FwdCache c;
      forward_cached(reward, xa.data(), ba, c);
      std::vector<double> delta(ba);
      for (std::size_t i = 0; i < ba; ++i) {
        delta[i] = (c.acts.back()[i] - 1.0) / static_cast<double>(ba);
      }
      backward_from_logits(reward, c, std::move(delta), ba, g);
    }
    adam_step(reward, g, adam, opt.learning_rate);
  }
  return reward;
}

void save_model(const MlpModel& m, const std::string& path) {
  MlpModel folded = m;
  fold_input_transform(folded);
  nlohmann::json j;
  j["format_version"] = kModelFormatVersion;
  j["layer_dims"] = folded.layer_dims;
  j["hidden_activation"] = activation_name(folded.hidden_activation);
  j["output_activation"] = activation_name(folded.output_activation);
  j["weights"] = folded.weights;
  j["biases"] = folded.biases;
  std::ofstream out(path);
  if (!out) throw format_error("save_model: cannot write " + path);
  out << j.dump();
  out << '\n';
  if (!out) throw format_error("save_model: write failed for " + path);
}

MlpModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw format_error("load_model: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw format_error("load_model: parse error in " + path + ": " + e.what());
  }
  try {
    if (!j.contains("format_version") || j["format_version"].get<int>() != kModelFormatVersion) {
      throw format_error("load_model: unsupported format version in " + path);
    }
    MlpModel m;
    m.layer_dims = j["layer_dims"].get<std::vector<int>>();
    m.hidden_activation = activation_from_name(j["hidden_activation"].get<std::string>());
    m.output_activation = activation_from_name(j["output_activation"].get<std::string>());
    m.weights = j["weights"].get<std::vector<std::vector<double>>>();
    m.biases = j["biases"].get<std::vector<std::vector<double>>>();
    if (m.layer_dims.size() < 2 || m.weights.size() != m.layer_dims.size() - 1 ||
        m.biases.size() != m.weights.size()) {
      throw format_error("load_model: layer structure inconsistent in " + path);
    }
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
      const auto in_d = static_cast<std::size_t>(m.layer_dims[l]);
      const auto out_d = static_cast<std::size_t>(m.layer_dims[l + 1]);
      if (m.weights[l].size() != in_d * out_d || m.biases[l].size() != out_d) {
        throw format_error("load_model: weight count inconsistent with dims in " + path);
      }
      for (double w : m.weights[l]) {
        if (!std::isfinite(w)) throw format_error("load_model: non-finite weight in " + path);
      }
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw format_error("load_model: malformed field in " + path + ": " + e.what());
  }
}

}  // namespace lab
