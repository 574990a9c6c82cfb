#include "lab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lab/errors.hpp"

namespace lab {

void TransferDataset::make_split(Rng& rng, double val_fraction) {
  const std::size_t n = size();
  order.resize(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  const auto val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
  train_count = n - std::min(n, std::max<std::size_t>(val, 1));
}

std::vector<std::size_t> TransferDataset::train_indices() const {
  return {order.begin(), order.begin() + static_cast<std::ptrdiff_t>(train_count)};
}

std::vector<std::size_t> TransferDataset::val_indices() const {
  return {order.begin() + static_cast<std::ptrdiff_t>(train_count), order.end()};
}

TransferDataset TransferDataset::subset(const std::vector<std::size_t>& idx) const {
  TransferDataset out;
  out.state_dim = state_dim;
  out.action_dim = action_dim;
  out.states.reserve(idx.size() * state_dim);
  out.actions.reserve(idx.size() * action_dim);
  for (std::size_t i : idx) {
    out.states.insert(out.states.end(), state(i), state(i) + state_dim);
    out.actions.insert(out.actions.end(), action(i), action(i) + action_dim);
  }
  out.order.resize(idx.size());
  std::iota(out.order.begin(), out.order.end(), std::size_t{0});
  out.train_count = idx.size();
  return out;
}

TransferDataset prune_data(const TransferDataset& d) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double* a = d.action(i);
    bool saturated = false;
    for (std::size_t j = 0; j < d.action_dim; ++j) {
      if (a[j] == 1.0 || a[j] == -1.0) {
        saturated = true;
        break;
      }
    }
    if (!saturated) keep.push_back(i);
  }
  return d.subset(keep);
}

TransferDataset concat(const TransferDataset& a, const TransferDataset& b) {
  if (a.size() == 0) return b;
  if (b.size() == 0) return a;
  if (a.state_dim != b.state_dim || a.action_dim != b.action_dim) {
    throw shape_error("concat: dataset dimensions differ");
  }
  TransferDataset out;
  out.state_dim = a.state_dim;
  out.action_dim = a.action_dim;
  out.states = a.states;
  out.states.insert(out.states.end(), b.states.begin(), b.states.end());
  out.actions = a.actions;
  out.actions.insert(out.actions.end(), b.actions.begin(), b.actions.end());
  out.order.resize(out.size());
  std::iota(out.order.begin(), out.order.end(), std::size_t{0});
  out.train_count = out.size();
  return out;
}

std::vector<std::size_t> sample_indices(Rng& rng, std::size_t total, std::size_t n) {
  if (n > total) throw degenerate_error("sample_indices: demand exceeds dataset size");
  std::vector<std::size_t> perm(total);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  rng.shuffle(perm);
  perm.resize(n);
  return perm;
}

}  // namespace lab
