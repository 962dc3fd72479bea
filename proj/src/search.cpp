#include "lattle/search.hpp"

#include <cmath>
#include <limits>

#include "lattle/log.hpp"

namespace lattle {

namespace {

double log_uniform(Rng& rng, double lo, double hi) {
  return std::exp(rng.uniform(std::log(lo), std::log(hi)));
}

}  // namespace

TrainConfig sample_config(const HyperparamSpace& space, Rng& rng) {
  if (space.batch_sizes.empty() || space.dropouts.empty() || space.warmup_ratios.empty())
    throw ConfigError("sample_config: empty choice set in search space");
  if (!(space.lr_lo > 0 && space.lr_hi >= space.lr_lo && space.wd_lo > 0 &&
        space.wd_hi >= space.wd_lo))
    throw ConfigError("sample_config: invalid log-uniform bounds");
  TrainConfig cfg;
  cfg.learning_rate = log_uniform(rng, space.lr_lo, space.lr_hi);
  cfg.batch_size =
      space.batch_sizes[rng.uniform_int(0, static_cast<int>(space.batch_sizes.size()) - 1)];
  cfg.weight_decay = log_uniform(rng, space.wd_lo, space.wd_hi);
  cfg.dropout = space.dropouts[rng.uniform_int(0, static_cast<int>(space.dropouts.size()) - 1)];
  cfg.warmup_ratio =
      space.warmup_ratios[rng.uniform_int(0, static_cast<int>(space.warmup_ratios.size()) - 1)];
  return cfg;
}

SearchResult random_search(const HyperparamSpace& space, int n_trials, std::uint64_t seed,
                           const std::function<double(const TrainConfig&)>& evaluate) {
  if (n_trials < 1) throw ConfigError("random_search: n_trials must be >= 1");
  Rng rng(seed);
  SearchResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  for (int t = 0; t < n_trials; ++t) {
    TrialRecord rec;
    rec.config = sample_config(space, rng);
    try {
      rec.val_loss = evaluate(rec.config);
      if (!std::isfinite(rec.val_loss)) {
        rec.failed = true;
        rec.error = "non-finite validation loss";
      }
    } catch (const std::exception& e) {
      rec.failed = true;
      rec.error = e.what();
    }
    if (!rec.failed && rec.val_loss < result.best_val_loss) {
      result.best_val_loss = rec.val_loss;
      result.best = rec.config;
    }
    log_debug("trial %d: lr %.3g batch %d wd %.3g dropout %.1f warmup %.2f -> %s", t,
              rec.config.learning_rate, rec.config.batch_size, rec.config.weight_decay,
              rec.config.dropout, rec.config.warmup_ratio,
              rec.failed ? rec.error.c_str() : std::to_string(rec.val_loss).c_str());
    result.trials.push_back(std::move(rec));
  }
  if (!std::isfinite(result.best_val_loss))
    throw TrainingError("random_search: all " + std::to_string(n_trials) +
                        " trials diverged");
  return result;
}

}  // namespace lattle
