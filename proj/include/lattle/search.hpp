#pragma once

#include <functional>
#include <vector>

#include "lattle/train.hpp"

namespace lattle {

// The published search space: LogUniform learning rate and weight decay,
// batch in {32,64,96,128}, categorical dropout and warmup choices.
struct HyperparamSpace {
  double lr_lo = 1e-5, lr_hi = 3e-4;
  std::vector<int> batch_sizes{32, 64, 96, 128};
  double wd_lo = 1e-6, wd_hi = 1e-2;
  std::vector<double> dropouts{0.0, 0.1, 0.2, 0.3, 0.4};
  std::vector<double> warmup_ratios{0.01, 0.05, 0.1};
};

// Fills the five searched fields; max_epochs and seed keep their defaults.
TrainConfig sample_config(const HyperparamSpace& space, Rng& rng);

struct TrialRecord {
  TrainConfig config;
  double val_loss = 0.0;
  bool failed = false;
  std::string error;
};

struct SearchResult {
  TrainConfig best;
  double best_val_loss = 0.0;
  std::vector<TrialRecord> trials;
};

// Seeded random search; evaluate returns the validation loss of a config.
// Errors when every trial diverges.
SearchResult random_search(const HyperparamSpace& space, int n_trials, std::uint64_t seed,
                           const std::function<double(const TrainConfig&)>& evaluate);

}  // namespace lattle
