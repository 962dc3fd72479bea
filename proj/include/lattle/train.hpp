#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lattle/gftt.hpp"
#include "lattle/metrics.hpp"
#include "lattle/mini_lm.hpp"
#include "lattle/tabular.hpp"

namespace lattle {

struct TrainConfig {
  double learning_rate = 3e-4;
  int batch_size = 16;
  double weight_decay = 0.01;
  double dropout = 0.1;
  double warmup_ratio = 0.1;
  int max_epochs = 200;
  // Stop once validation loss has not improved for this many consecutive
  // epochs; 0 trains the full max_epochs budget. The returned snapshot is the
  // best-validation epoch either way.
  int patience = 0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate >= 0)) throw ConfigError("train: negative learning rate");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (weight_decay < 0) throw ConfigError("train: negative weight_decay");
    if (dropout < 0 || dropout >= 1) throw ConfigError("train: dropout outside [0,1)");
    if (!(warmup_ratio > 0 && warmup_ratio < 1))
      throw ConfigError("train: warmup_ratio outside (0,1)");
    if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
    if (patience < 0) throw ConfigError("train: negative patience");
  }
};

// Linear ramp 0 -> peak over warmup_ratio * total_steps, then linear decay to
// 0 at total_steps.
double lr_schedule(std::int64_t step, std::int64_t total_steps, double warmup_ratio,
                   double peak_lr);

struct EpochPoint {
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  std::vector<EpochPoint> curve;  // one entry per epoch
  int best_epoch = 0;             // 1-based epoch with the lowest validation loss
  double best_val_loss = 0.0;
};

// Generic epoch loop: shuffled minibatches, per-step lr schedule, AdamW, NaN
// detection, per-epoch validation, best-snapshot restore. `loss_fn` builds
// the graph for one batch (training toggles dropout); `opt_params` are
// updated, `snapshot_params` define what best-epoch restoration covers.
TrainResult run_training(
    const TrainConfig& cfg, const std::vector<int>& train_indices,
    const std::vector<int>& val_indices, std::vector<Tensor<float>> opt_params,
    const std::vector<std::pair<std::string, Tensor<float>>>& snapshot_params,
    const std::function<Tensor<float>(const std::vector<int>&, bool, Rng&)>& loss_fn);

// ---- model-specific data plumbing ----

struct LmDataset {
  std::vector<std::vector<int>> seqs;  // encoded serialized rows
  std::vector<int> labels;
  int n_classes = 0;
};

LmDataset encode_dataset_for_lm(const TabularDataset& ds, const Vocabulary& v);

struct LmBatch {
  std::vector<int> ids;  // [B, T] row-major, PAD-padded suffixes
  std::vector<int> key_len;
  std::vector<int> labels;
  int B = 0, T = 0;
};

LmBatch make_lm_batch(const LmDataset& data, const std::vector<int>& indices);

// Source fine-tuning (classification cross-entropy over serialized rows).
// With full_finetune=false only the top decoder layer, projection, CLS, head
// and classifier train; embeddings and lower layers stay fixed.
TrainResult finetune_source(MiniLm<float>& lm, const LmDataset& data,
                            const std::vector<int>& train_idx, const std::vector<int>& val_idx,
                            const TrainConfig& cfg, bool full_finetune = false);

// Target fine-tuning; tensors already marked frozen (the transplant mask)
// receive gradients but are skipped by the optimizer.
TrainResult finetune_target(Gftt<float>& model, const std::vector<GfttRow>& rows,
                            const std::vector<int>& train_idx, const std::vector<int>& val_idx,
                            const TrainConfig& cfg);

std::vector<std::vector<double>> predict_probs_lm(const MiniLm<float>& lm,
                                                  const LmDataset& data,
                                                  const std::vector<int>& indices,
                                                  int batch_size = 64);
std::vector<std::vector<double>> predict_probs_gftt(const Gftt<float>& model,
                                                    const std::vector<GfttRow>& rows,
                                                    const std::vector<int>& indices,
                                                    int batch_size = 256);

// ---- multi-seed repetition ----

struct MetricsRecord {
  std::uint64_t seed = 0;
  double auc = 0.0;
  double acc = 0.0;
  int best_epoch = 0;
  double wall_time_s = 0.0;
};

struct SeedsSummary {
  std::vector<MetricsRecord> records;
  MeanStd auc, acc;
};

// Runs the pipeline once per seed (at most `threads` concurrently) and
// aggregates mean/sample-std. Any failing seed aborts with an aggregate
// error listing the failed seeds.
SeedsSummary run_seeds(const std::function<MetricsRecord(std::uint64_t)>& pipeline,
                       const std::vector<std::uint64_t>& seeds, int threads = 1);

}  // namespace lattle
