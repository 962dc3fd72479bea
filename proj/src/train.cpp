#include "lattle/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

#include "lattle/kernels.hpp"
#include "lattle/log.hpp"
#include "lattle/optim.hpp"

namespace lattle {

double lr_schedule(std::int64_t step, std::int64_t total_steps, double warmup_ratio,
                   double peak_lr) {
  if (total_steps <= 0) throw ConfigError("lr_schedule: total_steps must be positive");
  step = std::clamp<std::int64_t>(step, 0, total_steps);
  const std::int64_t warmup = std::llround(warmup_ratio * static_cast<double>(total_steps));
  if (warmup >= total_steps)
    return peak_lr * static_cast<double>(step) / static_cast<double>(total_steps);
  if (warmup > 0 && step <= warmup)
    return peak_lr * static_cast<double>(step) / static_cast<double>(warmup);
  return peak_lr * static_cast<double>(total_steps - step) /
         static_cast<double>(total_steps - warmup);
}

namespace {

// Temporarily turns off requires_grad so evaluation passes build no graph.
class NoGradGuard {
 public:
  explicit NoGradGuard(const std::vector<std::pair<std::string, Tensor<float>>>& params) {
    for (const auto& [name, t] : params) {
      saved_.emplace_back(t, t.requires_grad());
      Tensor<float>(t).set_requires_grad(false);
    }
  }
  ~NoGradGuard() {
    for (auto& [t, flag] : saved_) t.set_requires_grad(flag);
  }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  std::vector<std::pair<Tensor<float>, bool>> saved_;
};

double eval_mean_loss(
    const std::vector<int>& indices, int batch_size,
    const std::vector<std::pair<std::string, Tensor<float>>>& snapshot_params,
    const std::function<Tensor<float>(const std::vector<int>&, bool, Rng&)>& loss_fn,
    Rng& rng) {
  NoGradGuard guard(snapshot_params);
  double total = 0.0;
  for (std::size_t at = 0; at < indices.size(); at += batch_size) {
    std::vector<int> chunk(indices.begin() + at,
                           indices.begin() + std::min(at + batch_size, indices.size()));
    total += static_cast<double>(loss_fn(chunk, false, rng).item()) * chunk.size();
  }
  return total / static_cast<double>(indices.size());
}

}  // namespace

TrainResult run_training(
    const TrainConfig& cfg, const std::vector<int>& train_indices,
    const std::vector<int>& val_indices, std::vector<Tensor<float>> opt_params,
    const std::vector<std::pair<std::string, Tensor<float>>>& snapshot_params,
    const std::function<Tensor<float>(const std::vector<int>&, bool, Rng&)>& loss_fn) {
  cfg.validate();
  if (train_indices.empty()) throw DataError("run_training: empty training fold");
  if (val_indices.empty()) throw DataError("run_training: empty validation fold");

  AdamW<float>::Config oc;
  oc.lr = 0.0;  // set per step by the schedule
  oc.weight_decay = cfg.weight_decay;
  AdamW<float> opt(std::move(opt_params), oc);

  const std::int64_t steps_per_epoch =
      (static_cast<std::int64_t>(train_indices.size()) + cfg.batch_size - 1) / cfg.batch_size;
  const std::int64_t total_steps = steps_per_epoch * cfg.max_epochs;

  Rng rng(cfg.seed);
  TrainResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  std::vector<std::vector<float>> best_data;

  std::vector<int> perm = train_indices;
  std::int64_t step = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(perm);
    double train_loss = 0.0;
    for (std::size_t at = 0; at < perm.size(); at += cfg.batch_size) {
      std::vector<int> batch(perm.begin() + at,
                             perm.begin() + std::min(at + cfg.batch_size, perm.size()));
      opt.set_lr(lr_schedule(step + 1, total_steps, cfg.warmup_ratio, cfg.learning_rate));
      Tensor<float> loss = loss_fn(batch, true, rng);
      const double lv = loss.item();
      if (!std::isfinite(lv))
        throw TrainingError("training diverged (non-finite loss) at step " +
                            std::to_string(step + 1) + " of epoch " + std::to_string(epoch));
      opt.zero_grad();
      loss.backward();
      opt.step();
      ++step;
      train_loss += lv * batch.size();
    }
    train_loss /= static_cast<double>(perm.size());

    const double val_loss =
        eval_mean_loss(val_indices, cfg.batch_size, snapshot_params, loss_fn, rng);
    result.curve.push_back({train_loss, val_loss});
    if (val_loss < result.best_val_loss) {
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      best_data.clear();
      for (const auto& [name, t] : snapshot_params) best_data.push_back(t.data_vec());
    }
    log_debug("epoch %d: train_loss %.6f val_loss %.6f", epoch, train_loss, val_loss);
    if (cfg.patience > 0 && epoch - result.best_epoch >= cfg.patience) {
      log_debug("early stop at epoch %d (no val improvement for %d epochs)", epoch,
                cfg.patience);
      break;
    }
  }

  for (std::size_t i = 0; i < snapshot_params.size(); ++i) {
    const auto& src = best_data[i];
    Tensor<float> t = snapshot_params[i].second;
    std::copy(src.begin(), src.end(), t.data());
  }
  return result;
}

LmDataset encode_dataset_for_lm(const TabularDataset& ds, const Vocabulary& v) {
  LmDataset out;
  out.n_classes = ds.schema.n_classes();
  for (std::size_t i = 0; i < ds.n(); ++i) {
    out.seqs.push_back(encode(v, serialize_row(ds.rows[i], ds.schema)));
    out.labels.push_back(ds.labels[i]);
  }
  return out;
}

LmBatch make_lm_batch(const LmDataset& data, const std::vector<int>& indices) {
  LmBatch b;
  b.B = static_cast<int>(indices.size());
  for (int i : indices)
    b.T = std::max(b.T, static_cast<int>(data.seqs[i].size()));
  b.T = std::max(b.T, 1);
  b.ids.assign(static_cast<std::size_t>(b.B) * b.T, Vocabulary::kPad);
  for (int r = 0; r < b.B; ++r) {
    const auto& seq = data.seqs[indices[r]];
    std::copy(seq.begin(), seq.end(), b.ids.begin() + static_cast<std::size_t>(r) * b.T);
    b.key_len.push_back(static_cast<int>(seq.size()));
    b.labels.push_back(data.labels[indices[r]]);
  }
  return b;
}

TrainResult finetune_source(MiniLm<float>& lm, const LmDataset& data,
                            const std::vector<int>& train_idx, const std::vector<int>& val_idx,
                            const TrainConfig& cfg, bool full_finetune) {
  lm.cfg.dropout = cfg.dropout;
  lm.set_trainable_scope(full_finetune);
  auto snapshot = lm.named_params();
  auto loss_fn = [&lm, &data](const std::vector<int>& idx, bool training, Rng& rng) {
    LmBatch b = make_lm_batch(data, idx);
    Tensor<float> logits = lm.forward_classify(b.ids, b.B, b.T, b.key_len, rng, training);
    return cross_entropy(logits, b.labels);
  };
  return run_training(cfg, train_idx, val_idx, lm.trainable_params(full_finetune), snapshot,
                      loss_fn);
}

TrainResult finetune_target(Gftt<float>& model, const std::vector<GfttRow>& rows,
                            const std::vector<int>& train_idx, const std::vector<int>& val_idx,
                            const TrainConfig& cfg) {
  model.cfg.dropout = cfg.dropout;
  auto snapshot = model.named_params();
  auto loss_fn = [&model, &rows](const std::vector<int>& idx, bool training, Rng& rng) {
    std::vector<const GfttRow*> batch;
    std::vector<int> labels;
    for (int i : idx) {
      batch.push_back(&rows[i]);
      labels.push_back(rows[i].label);
    }
    Tensor<float> logits = model.forward_classify(batch, rng, training);
    return cross_entropy(logits, labels);
  };
  return run_training(cfg, train_idx, val_idx, model.params(), snapshot, loss_fn);
}

namespace {

std::vector<std::vector<double>> logits_to_probs(const Tensor<float>& logits) {
  const int B = logits.dim(0), C = logits.dim(1);
  std::vector<float> probs(static_cast<std::size_t>(B) * C);
  kern::serial::softmax_rows(logits.data(), probs.data(), B, C);
  std::vector<std::vector<double>> out(B, std::vector<double>(C));
  for (int i = 0; i < B; ++i)
    for (int c = 0; c < C; ++c) out[i][c] = probs[static_cast<std::size_t>(i) * C + c];
  return out;
}

}  // namespace

std::vector<std::vector<double>> predict_probs_lm(const MiniLm<float>& lm,
                                                  const LmDataset& data,
                                                  const std::vector<int>& indices,
                                                  int batch_size) {
  NoGradGuard guard(lm.named_params());
  Rng rng(0);
  std::vector<std::vector<double>> out;
  for (std::size_t at = 0; at < indices.size(); at += batch_size) {
    std::vector<int> chunk(indices.begin() + at,
                           indices.begin() + std::min(at + batch_size, indices.size()));
    LmBatch b = make_lm_batch(data, chunk);
    Tensor<float> logits = lm.forward_classify(b.ids, b.B, b.T, b.key_len, rng, false);
    for (auto& row : logits_to_probs(logits)) out.push_back(std::move(row));
  }
  return out;
}

std::vector<std::vector<double>> predict_probs_gftt(const Gftt<float>& model,
                                                    const std::vector<GfttRow>& rows,
                                                    const std::vector<int>& indices,
                                                    int batch_size) {
  NoGradGuard guard(model.named_params());
  Rng rng(0);
  std::vector<std::vector<double>> out;
  for (std::size_t at = 0; at < indices.size(); at += batch_size) {
    std::vector<const GfttRow*> batch;
    for (std::size_t i = at; i < std::min(at + batch_size, indices.size()); ++i)
      batch.push_back(&rows[indices[i]]);
    Tensor<float> logits = model.forward_classify(batch, rng, false);
    for (auto& row : logits_to_probs(logits)) out.push_back(std::move(row));
  }
  return out;
}

SeedsSummary run_seeds(const std::function<MetricsRecord(std::uint64_t)>& pipeline,
                       const std::vector<std::uint64_t>& seeds, int threads) {
  if (seeds.empty()) throw ConfigError("run_seeds: empty seed list");
  threads = std::clamp(threads, 1, static_cast<int>(seeds.size()));

  SeedsSummary out;
  out.records.resize(seeds.size());
  std::vector<std::string> errors(seeds.size());
  std::vector<char> failed(seeds.size(), 0);

  auto run_one = [&](std::size_t i) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      out.records[i] = pipeline(seeds[i]);
      out.records[i].seed = seeds[i];
      if (out.records[i].wall_time_s == 0.0)
        out.records[i].wall_time_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    } catch (const std::exception& e) {
      failed[i] = 1;
      errors[i] = e.what();
    }
  };

  if (threads == 1) {
    for (std::size_t i = 0; i < seeds.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < seeds.size(); i = next.fetch_add(1))
          run_one(i);
      });
    for (auto& th : pool) th.join();
  }

  std::string failed_list, first_error;
  for (std::size_t i = 0; i < seeds.size(); ++i)
    if (failed[i]) {
      failed_list += (failed_list.empty() ? "" : ", ") + std::to_string(seeds[i]);
      if (first_error.empty()) first_error = errors[i];
    }
  if (!failed_list.empty())
    throw TrainingError("run_seeds: seeds " + failed_list + " failed; first error: " +
                        first_error);

  std::vector<double> aucs, accs;
  for (const auto& r : out.records) {
    aucs.push_back(r.auc);
    accs.push_back(r.acc);
  }
  out.auc = mean_std(aucs);
  out.acc = mean_std(accs);
  return out;
}

}  // namespace lattle
