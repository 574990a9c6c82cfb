#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lab/dataset.hpp"
#include "lab/rng.hpp"

namespace lab {

enum class Activation : std::uint8_t { identity, relu, tanh, sigmoid };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

// Dense feed-forward network. Layer l maps layer_dims[l] -> layer_dims[l+1]
// with weights[l] row-major by output neuron (w[o * in + i]) and biases[l].
// input_shift/input_scale, when non-empty, standardize raw inputs before
// layer 0 ((x - shift) / scale); trainers set them from training-data
// statistics so optimization happens at unit scale regardless of sensor
// ranges, and fold_input_transform bakes them into layer 0 so persisted
// models are plain MLPs over raw inputs.
struct MlpModel {
  std::vector<int> layer_dims;
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
  Activation hidden_activation = Activation::tanh;
  Activation output_activation = Activation::tanh;
  std::vector<double> input_shift;
  std::vector<double> input_scale;

  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }
  std::size_t layer_count() const { return weights.size(); }
};

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 1024;
  int epochs = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::optional<int> early_stop_patience;
  // Stop as soon as the per-epoch validation loss drops below this value.
  std::optional<double> val_target;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
};

// Per-parameter Adam moment accumulators, shaped like the model.
struct AdamState {
  std::vector<std::vector<double>> m_w, v_w, m_b, v_b;
  std::int64_t step = 0;
};

// Gradient (or any parameter-shaped) container.
struct ParamGrads {
  std::vector<std::vector<double>> w, b;
};

MlpModel make_mlp(const std::vector<int>& layer_dims, Activation hidden,
                  Activation output, Rng& rng);

// Sets standardization from per-dimension mean/std of the given rows
// (zero-variance dims fall back to scale 1). No-op on the weights.
void set_input_standardization(MlpModel& m, const double* rows,
                               std::size_t n_rows);

// Bakes input_shift/input_scale into layer 0 and clears them. Forward
// outputs are mathematically identical afterwards.
void fold_input_transform(MlpModel& m);

std::vector<double> mlp_forward(const MlpModel& m, const std::vector<double>& input);

// Batched forward: x is n_rows x input_dim raw inputs, y receives
// n_rows x output_dim.
void mlp_forward_batch(const MlpModel& m, const double* x, std::size_t n_rows,
                       double* y);

ParamGrads zero_grads(const MlpModel& m);
AdamState make_adam_state(const MlpModel& m);

// Full backprop pass: forward on x, then backward from dL/dY (n_rows x out),
// accumulating parameter gradients into g. Returns the batch outputs.
std::vector<double> mlp_backward(const MlpModel& m, const double* x,
                                 std::size_t n_rows, const double* dl_dy,
                                 ParamGrads& g);

// Mean-per-component Huber loss and its gradient w.r.t. pred:
// per component 0.5 d^2 for |d| < 1 else |d| - 0.5, d = pred - target.
std::pair<double, std::vector<double>> huber_loss(const std::vector<double>& pred,
                                                  const std::vector<double>& target);

void adam_step(MlpModel& m, const ParamGrads& g, AdamState& s, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

struct BcResult {
  MlpModel model;
  double val_loss = 0.0;  // mean Huber loss on the validation split
  int epochs_run = 0;
};

// Supervised regression of actions onto states: samples `demand` pairs,
// splits train/validation, runs minibatch Huber-loss Adam for cfg.epochs
// (early stopping with best-weight restore when cfg.early_stop_patience is
// set). Deterministic in (dataset, model, cfg).
BcResult behavioral_cloning(const TransferDataset& data, MlpModel model,
                            std::size_t demand, const TrainConfig& cfg);

// Mean Huber loss of model predictions over every pair in valset.
double validation_loss(const MlpModel& m, const TransferDataset& valset);

// Per-pair Huber losses, same order as the dataset.
std::vector<double> per_pair_losses(const MlpModel& m, const TransferDataset& d);

// Discriminator output for a (state, action) pair; input is the
// concatenation in that order.
double reward_forward(const MlpModel& reward, const std::vector<double>& state,
                      const std::vector<double>& action);

struct RewardTrainOptions {
  std::size_t demand = 0;
  int steps = 400;
  double learning_rate = 1e-3;
  std::size_t batch_size = 1024;
  bool prune = true;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
};

// Trains the discriminator to score attacker pairs toward 1 and victim pairs
// toward 0: T steps of Adam on
//   mean[-log R(s_a, a_a)] + mean[-log(1 - R(s_v, a_v))]
// with the victim side drawn from the (optionally pruned) train split of
// `demand` pairs sampled from d_v. Throws degenerate_error if pruning leaves
// that split empty.
MlpModel train_reward(const TransferDataset& d_a, const TransferDataset& d_v,
                      MlpModel reward, const RewardTrainOptions& opt);

// Discriminator outputs clamped to this range before any log.
inline constexpr double kRewardClamp = 1e-7;

void save_model(const MlpModel& m, const std::string& path);
MlpModel load_model(const std::string& path);

}  // namespace lab
