#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "lab/rng.hpp"

namespace lab {

// State-action pairs obtained by querying an oracle, with a persistent
// shuffled train/validation split (order[0..train_count) trains, the rest
// validates).
struct TransferDataset {
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::vector<double> states;   // row-major, size() x state_dim
  std::vector<double> actions;  // row-major, size() x action_dim
  std::vector<std::size_t> order;
  std::size_t train_count = 0;

  std::size_t size() const {
    return state_dim == 0 ? 0 : states.size() / state_dim;
  }

  const double* state(std::size_t i) const { return states.data() + i * state_dim; }
  const double* action(std::size_t i) const { return actions.data() + i * action_dim; }

  // Assigns a fresh shuffled 90/10-style split over all pairs.
  void make_split(Rng& rng, double val_fraction);

  std::vector<std::size_t> train_indices() const;
  std::vector<std::size_t> val_indices() const;

  // Copies the selected pairs into a new dataset (order reset to identity,
  // all pairs marked train).
  TransferDataset subset(const std::vector<std::size_t>& idx) const;
};

// Drops every pair whose action has any component exactly equal to +1 or -1
// (exact comparison; saturated outputs of a clipped or tanh oracle).
TransferDataset prune_data(const TransferDataset& d);

// Concatenates two datasets (split marks discarded; call make_split after).
TransferDataset concat(const TransferDataset& a, const TransferDataset& b);

// First n entries of a random permutation of [0, total).
std::vector<std::size_t> sample_indices(Rng& rng, std::size_t total, std::size_t n);

}  // namespace lab
