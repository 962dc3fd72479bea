#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lattle/config.hpp"
#include "lattle/train.hpp"
#include "lattle/transplant.hpp"

namespace lattle {

// Phase 1: fine-tune the decoder LM on serialized source rows.
// Writes vocab.tsv, lm.ckpt (+ .hash), lm_curve.csv, lm_metrics.json.
struct PretrainOutcome {
  TrainResult train;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double wall_time_s = 0.0;
  int vocab_size = 0;
};
PretrainOutcome phase_pretrain(const ExperimentConfig& cfg);

// Phase 2: build a fresh gFTT sized for the target table and copy the
// strategy's K/V projections (with biases) from the LM, frozen.
// Writes gftt_init.ckpt (+ .hash) and transplant.json.
struct TransplantOutcome {
  std::string strategy;
  std::vector<std::pair<int, int>> mapping;
  std::vector<std::string> freeze_mask;
};
TransplantOutcome phase_transplant(const ExperimentConfig& cfg);

// Phase 3: per-seed target fine-tuning with the frozen transplant installed,
// optional random search first. Writes per-seed artifacts under
// out_dir/seed_<s>/, plus metrics.jsonl, summary.{txt,json}.
// A frozen tensor changing during training is a ContractError.
struct FinetuneOutcome {
  SeedsSummary summary;
  TrainConfig used;  // hyperparameters actually trained with
  bool searched = false;
};
FinetuneOutcome phase_finetune(const ExperimentConfig& cfg);

struct PipelineOutcome {
  PretrainOutcome pretrain;
  TransplantOutcome transplant;
  FinetuneOutcome finetune;
};
PipelineOutcome run_pipeline(const ExperimentConfig& cfg);

// Strategy sweep sharing one pretrained LM: proposed, top-to-two,
// toptwo-to-two and the no-transfer control. Writes ablation.{csv,txt}.
struct AblationRow {
  std::string strategy;
  SeedsSummary summary;
};
std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg);

}  // namespace lattle
