#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lattle/errors.hpp"

namespace lattle {

// Flat `key = value` experiment file. Unknown keys are rejected; every run
// writes the fully resolved config (defaults filled in) next to its outputs.
struct ExperimentConfig {
  // paths
  std::string source_csv;
  std::string target_csv;
  std::string out_dir = "out";
  std::string label_column = "label";
  // Optional explicit artifact paths; empty means "derived from out_dir".
  std::string vocab_path;
  std::string lm_checkpoint;
  std::string gftt_checkpoint;

  // model geometry (shared d_model; the transplant requires equal geometry)
  int d_model = 64;
  int lm_layers = 6;
  int gftt_layers = 5;
  int lm_heads = 4;
  int gftt_heads = 8;
  int ffn_hidden = 256;
  int lm_head_layers = 1;
  int max_len = 1024;

  // source fine-tuning phase
  double lm_lr = 3e-4;
  int lm_batch = 16;
  int lm_epochs = 200;
  double lm_weight_decay = 0.01;
  double lm_warmup_ratio = 0.1;
  double lm_dropout = 0.1;
  bool lm_full_finetune = false;
  std::uint64_t pretrain_seed = 0;

  // target fine-tuning phase ("up to" tgt_epochs: patience stops a plateaued
  // run early; 0 disables and trains the full budget)
  double tgt_lr = 3e-4;
  int tgt_batch = 64;
  int tgt_epochs = 150;
  int tgt_patience = 20;
  double tgt_weight_decay = 0.01;
  double tgt_warmup_ratio = 0.1;
  double tgt_dropout = 0.1;

  // transplant + protocol
  std::string strategy = "proposed";
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  int search_trials = 0;  // 0 disables hyperparameter search
  std::uint64_t search_seed = 0;
  int search_epochs = 30;  // shortened budget per search trial
  int vocab_min_freq = 1;

  // CLI-only (not a config-file key)
  int threads = 1;

  std::string vocab_file() const {
    return vocab_path.empty() ? out_dir + "/vocab.tsv" : vocab_path;
  }
  std::string lm_ckpt_file() const {
    return lm_checkpoint.empty() ? out_dir + "/lm.ckpt" : lm_checkpoint;
  }
  std::string gftt_init_file() const {
    return gftt_checkpoint.empty() ? out_dir + "/gftt_init.ckpt" : gftt_checkpoint;
  }

  void validate() const;
  // All file keys in canonical order with current values; reparses to an
  // identical config.
  std::string resolved_text() const;
};

ExperimentConfig parse_experiment_config(const std::string& path);
ExperimentConfig parse_experiment_config_text(const std::string& text,
                                              const std::string& origin);

// "<stem>.schema" next to a csv, e.g. data/source.csv -> data/source.schema.
std::string schema_path_for(const std::string& csv_path);

}  // namespace lattle
