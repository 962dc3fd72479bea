#include "lattle/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

#include <json.hpp>

#include "lattle/checkpoint.hpp"
#include "lattle/log.hpp"
#include "lattle/search.hpp"
#include "lattle/tokenizer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace lattle {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void ensure_dir(const std::string& path) {
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec) throw DataError("cannot create directory '" + path + "': " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << text;
  if (!out) throw DataError("short write to '" + path + "'");
}

void write_resolved(const ExperimentConfig& cfg) {
  write_text(cfg.out_dir + "/config_resolved.txt", cfg.resolved_text());
}

// CSV plus optional `<stem>.schema` sidecar; the sidecar must agree with the
// inferred schema (it documents, it does not coerce).
TabularDataset load_dataset(const std::string& csv, const std::string& label_column) {
  TabularDataset ds = load_csv(csv, label_column);
  const std::string sp = schema_path_for(csv);
  if (fs::exists(sp)) {
    Schema s = load_schema(sp);
    auto disagree = [&](const std::string& what) {
      throw DataError("schema sidecar '" + sp + "' disagrees with the csv: " + what);
    };
    if (s.columns.size() != ds.schema.columns.size())
      disagree("it lists " + std::to_string(s.columns.size()) + " feature columns, the csv has " +
               std::to_string(ds.schema.columns.size()));
    for (std::size_t c = 0; c < s.columns.size(); ++c) {
      if (lower_str(s.columns[c].name) != lower_str(ds.schema.columns[c].name))
        disagree("column " + std::to_string(c) + " is '" + ds.schema.columns[c].name +
                 "', sidecar says '" + s.columns[c].name + "'");
      if (s.columns[c].kind != ds.schema.columns[c].kind)
        disagree("column '" + ds.schema.columns[c].name + "' kind mismatch");
    }
    if (lower_str(s.label_column) != lower_str(ds.schema.label_column))
      disagree("label column is '" + ds.schema.label_column + "', sidecar says '" +
               s.label_column + "'");
  }
  return ds;
}

// Source-train sentences plus coverage for everything the gFTT feature
// tokenizer will look up: target feature names, the per-column category
// vocabularies, and the missing marker.
std::vector<std::string> build_corpus(const TabularDataset& source,
                                      const std::vector<int>& train_idx,
                                      const TabularDataset& target) {
  std::vector<std::string> corpus;
  corpus.reserve(train_idx.size() + 4 * target.schema.columns.size());
  for (int i : train_idx) corpus.push_back(serialize_row(source.rows[i], source.schema));
  for (int c = 0; c < target.schema.n_features(); ++c) {
    const Column& col = target.schema.columns[c];
    corpus.push_back(col.name);
    if (col.kind == ColKind::Categorical) {
      std::set<std::string> values;
      for (const auto& row : target.rows)
        if (!row[c].missing) values.insert(row[c].cat);
      for (const auto& v : values) corpus.push_back(col.name + " " + v);
      corpus.push_back(col.name + " missing");
    }
  }
  return corpus;
}

std::string curve_csv(const TrainResult& r) {
  std::ostringstream os;
  os << "epoch,train_loss,val_loss\n";
  char buf[96];
  for (std::size_t i = 0; i < r.curve.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.10g\n", i + 1, r.curve[i].train_loss,
                  r.curve[i].val_loss);
    os << buf;
  }
  return os.str();
}

std::string hash_hex(std::uint64_t h) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json train_config_json(const TrainConfig& t) {
  return {{"learning_rate", t.learning_rate}, {"batch_size", t.batch_size},
          {"weight_decay", t.weight_decay},   {"dropout", t.dropout},
          {"warmup_ratio", t.warmup_ratio},   {"max_epochs", t.max_epochs}};
}

void install_frozen(Gftt<float>& model, const std::vector<const NamedTensorData*>& payloads) {
  auto named = model.named_params();
  for (const NamedTensorData* p : payloads) {
    Tensor<float>* dst = nullptr;
    for (auto& [n, t] : named)
      if (n == p->name) {
        dst = &t;
        break;
      }
    if (!dst)
      throw DataError("transplant payload '" + p->name + "' has no matching gFTT tensor");
    if (dst->shape() != p->dims)
      throw DataError("transplant payload '" + p->name + "' has mismatched dimensions");
    std::copy(p->data.begin(), p->data.end(), dst->data());
    dst->set_frozen(true);
  }
}

// Reference hashes for post-training verification: every masked tensor plus
// the (trainable) W_q of each transplanted layer.
std::map<std::string, std::uint64_t> reference_hashes(const Gftt<float>& model,
                                                      const std::vector<std::string>& mask) {
  std::map<std::string, std::uint64_t> ref;
  std::set<std::string> layers;
  auto named = model.named_params();
  auto hash_of = [&](const std::string& name) -> std::uint64_t {
    for (const auto& [n, t] : named)
      if (n == name) return tensor_hash(t);
    throw DataError("reference_hashes: unknown tensor '" + name + "'");
  };
  for (const auto& name : mask) {
    ref[name] = hash_of(name);
    auto dot = name.find('.');
    if (dot != std::string::npos) layers.insert(name.substr(0, dot));
  }
  for (const auto& layer : layers) ref[layer + ".w_q"] = hash_of(layer + ".w_q");
  return ref;
}

}  // namespace

PretrainOutcome phase_pretrain(const ExperimentConfig& cfg) {
  cfg.validate();
  ensure_dir(cfg.out_dir);
  write_resolved(cfg);
  const auto t0 = Clock::now();

  TabularDataset source = load_dataset(cfg.source_csv, cfg.label_column);
  TabularDataset target = load_dataset(cfg.target_csv, cfg.label_column);
  SplitAssignment sp = split(source, cfg.pretrain_seed);

  Vocabulary vocab =
      build_vocab(build_corpus(source, sp.train, target), cfg.vocab_min_freq, cfg.max_len);
  save_vocab(vocab, cfg.vocab_file());
  log_info("pretrain: vocabulary of %d tokens -> %s", vocab.size(), cfg.vocab_file().c_str());

  LmDataset data = encode_dataset_for_lm(source, vocab);
  LmConfig lmc;
  lmc.n_layers = cfg.lm_layers;
  lmc.n_heads = cfg.lm_heads;
  lmc.d_model = cfg.d_model;
  lmc.ffn_hidden = cfg.ffn_hidden;
  lmc.max_len = cfg.max_len;
  lmc.vocab_size = vocab.size();
  lmc.n_classes = data.n_classes;
  lmc.head_layers = cfg.lm_head_layers;
  lmc.head_heads = cfg.gftt_heads;
  lmc.dropout = cfg.lm_dropout;

  Rng init_rng(cfg.pretrain_seed);
  MiniLm<float> lm = MiniLm<float>::init(lmc, init_rng);

  TrainConfig tc;
  tc.learning_rate = cfg.lm_lr;
  tc.batch_size = cfg.lm_batch;
  tc.weight_decay = cfg.lm_weight_decay;
  tc.dropout = cfg.lm_dropout;
  tc.warmup_ratio = cfg.lm_warmup_ratio;
  tc.max_epochs = cfg.lm_epochs;
  tc.seed = cfg.pretrain_seed;

  PretrainOutcome out;
  out.train = finetune_source(lm, data, sp.train, sp.val, tc, cfg.lm_full_finetune);
  write_text(cfg.out_dir + "/lm_curve.csv", curve_csv(out.train));

  auto acc_on = [&](const std::vector<int>& idx) {
    auto probs = predict_probs_lm(lm, data, idx);
    std::vector<int> labels;
    for (int i : idx) labels.push_back(data.labels[i]);
    return compute_acc(probs, labels);
  };
  out.train_acc = acc_on(sp.train);
  out.val_acc = acc_on(sp.val);
  out.vocab_size = vocab.size();
  out.wall_time_s = seconds_since(t0);

  save_checkpoint(checkpoint_from_lm(lm, cfg.pretrain_seed), cfg.lm_ckpt_file());
  json metrics = {{"train_acc", out.train_acc},
                  {"val_acc", out.val_acc},
                  {"best_epoch", out.train.best_epoch},
                  {"best_val_loss", out.train.best_val_loss},
                  {"wall_time_s", out.wall_time_s},
                  {"vocab_size", out.vocab_size}};
  write_text(cfg.out_dir + "/lm_metrics.json", metrics.dump(2) + "\n");
  log_info("pretrain: train acc %.3f, val acc %.3f, best epoch %d (%.1fs)", out.train_acc,
           out.val_acc, out.train.best_epoch, out.wall_time_s);
  return out;
}

TransplantOutcome phase_transplant(const ExperimentConfig& cfg) {
  cfg.validate();
  ensure_dir(cfg.out_dir);
  write_resolved(cfg);

  MiniLm<float> lm = lm_from_checkpoint(load_checkpoint(cfg.lm_ckpt_file(), "mini-lm"));
  TabularDataset target = load_dataset(cfg.target_csv, cfg.label_column);
  Vocabulary vocab = load_vocab(cfg.vocab_file(), cfg.max_len);

  GfttConfig gc;
  gc.n_layers = cfg.gftt_layers;
  gc.n_heads = cfg.gftt_heads;
  gc.d_model = cfg.d_model;
  gc.ffn_hidden = cfg.ffn_hidden;
  gc.vocab_size = vocab.size();
  gc.n_classes = target.schema.n_classes();
  gc.n_features = target.schema.n_features();
  gc.dropout = cfg.tgt_dropout;

  TransplantStrategy strategy =
      strategy_from_name(cfg.strategy, lm.cfg.n_layers, gc.n_layers);
  Rng grng(cfg.pretrain_seed);
  Gftt<float> model = Gftt<float>::init(gc, grng);
  std::vector<std::string> mask = apply_transplant(lm, model, strategy);
  save_checkpoint(checkpoint_from_gftt(model, cfg.pretrain_seed, mask, target.schema),
                  cfg.gftt_init_file());

  json hashes = json::object();
  auto named = model.named_params();
  for (const auto& name : mask)
    for (const auto& [n, t] : named)
      if (n == name) hashes[name] = hash_hex(tensor_hash(t));
  json mapping = json::array();
  for (auto [src, tgt] : strategy.mapping) mapping.push_back({src, tgt});
  json report = {{"strategy", strategy.name},
                 {"mapping", mapping},
                 {"freeze_mask", mask},
                 {"hashes", hashes},
                 {"lm_checkpoint", cfg.lm_ckpt_file()},
                 {"d_model", gc.d_model}};
  write_text(cfg.out_dir + "/transplant.json", report.dump(2) + "\n");
  log_info("transplant: strategy %s froze %zu tensors -> %s", strategy.name.c_str(),
           mask.size(), cfg.gftt_init_file().c_str());

  TransplantOutcome out;
  out.strategy = strategy.name;
  out.mapping = strategy.mapping;
  out.freeze_mask = mask;
  return out;
}

FinetuneOutcome phase_finetune(const ExperimentConfig& cfg) {
  cfg.validate();
  ensure_dir(cfg.out_dir);
  write_resolved(cfg);

  TabularDataset target = load_dataset(cfg.target_csv, cfg.label_column);
  Vocabulary vocab = load_vocab(cfg.vocab_file(), cfg.max_len);
  std::vector<std::string> mask;
  Schema ck_schema;
  Checkpoint gck = load_checkpoint(cfg.gftt_init_file(), "gftt");
  Gftt<float> proto = gftt_from_checkpoint(gck, &mask, &ck_schema);

  if (proto.cfg.vocab_size != vocab.size())
    throw DataError("finetune: vocabulary has " + std::to_string(vocab.size()) +
                    " tokens but the gFTT checkpoint expects " +
                    std::to_string(proto.cfg.vocab_size));
  if (ck_schema.classes != target.schema.classes)
    throw DataError("finetune: target label classes differ from the transplant checkpoint");

  // Payload integrity: the frozen tensors must match the sidecar written at
  // transplant time.
  std::vector<const NamedTensorData*> payloads;
  for (const auto& t : gck.tensors)
    if (t.frozen) payloads.push_back(&t);
  const std::string sidecar = hash_sidecar_path(cfg.gftt_init_file());
  if (fs::exists(sidecar)) {
    auto expect = load_hash_sidecar(sidecar);
    for (const NamedTensorData* p : payloads) {
      auto it = expect.find(p->name);
      if (it != expect.end() &&
          it->second != fnv1a(p->data.data(), p->data.size() * sizeof(float)))
        throw DataError("finetune: frozen payload '" + p->name +
                        "' does not match the checkpoint hash sidecar");
    }
  } else {
    log_info("finetune: no hash sidecar at %s; skipping payload integrity check",
             sidecar.c_str());
  }

  TrainConfig base;
  base.learning_rate = cfg.tgt_lr;
  base.batch_size = cfg.tgt_batch;
  base.weight_decay = cfg.tgt_weight_decay;
  base.dropout = cfg.tgt_dropout;
  base.warmup_ratio = cfg.tgt_warmup_ratio;
  base.max_epochs = cfg.tgt_epochs;
  base.patience = cfg.tgt_patience;

  FinetuneOutcome out;
  if (cfg.search_trials > 0) {
    SplitAssignment sp = split(target, cfg.search_seed);
    Normalizer nz = fit_normalizer(target, sp.train);
    std::vector<GfttRow> rows = prepare_gftt_rows(apply_normalizer(target, nz), vocab, ck_schema);
    auto evaluate = [&](const TrainConfig& trial) {
      TrainConfig t = trial;
      t.max_epochs = cfg.search_epochs;
      t.patience = cfg.tgt_patience;
      t.seed = cfg.search_seed;
      Rng r(cfg.search_seed);
      Gftt<float> m = Gftt<float>::init(proto.cfg, r);
      install_frozen(m, payloads);
      return finetune_target(m, rows, sp.train, sp.val, t).best_val_loss;
    };
    SearchResult sr =
        random_search(HyperparamSpace{}, cfg.search_trials, cfg.search_seed, evaluate);
    base.learning_rate = sr.best.learning_rate;
    base.batch_size = sr.best.batch_size;
    base.weight_decay = sr.best.weight_decay;
    base.dropout = sr.best.dropout;
    base.warmup_ratio = sr.best.warmup_ratio;
    out.searched = true;

    std::ostringstream trials;
    for (const auto& t : sr.trials) {
      json j = {{"config", train_config_json(t.config)},
                {"val_loss", t.val_loss},
                {"failed", t.failed}};
      if (t.failed) j["error"] = t.error;
      trials << j.dump() << "\n";
    }
    write_text(cfg.out_dir + "/search_trials.jsonl", trials.str());
    json best = {{"config", train_config_json(sr.best)}, {"val_loss", sr.best_val_loss}};
    write_text(cfg.out_dir + "/search_best.json", best.dump(2) + "\n");
    log_info("search: best val loss %.4f after %zu trials", sr.best_val_loss,
             sr.trials.size());
  }
  out.used = base;

  std::mutex mu;
  std::vector<std::pair<std::uint64_t, FrozenReport>> reports;

  auto per_seed = [&](std::uint64_t seed) -> MetricsRecord {
    const auto t0 = Clock::now();
    SplitAssignment sp = split(target, seed);
    Normalizer nz = fit_normalizer(target, sp.train);
    std::vector<GfttRow> rows = prepare_gftt_rows(apply_normalizer(target, nz), vocab, ck_schema);

    Rng r(seed);
    Gftt<float> model = Gftt<float>::init(proto.cfg, r);
    install_frozen(model, payloads);
    auto ref = reference_hashes(model, mask);

    TrainConfig tc = base;
    tc.seed = seed;
    TrainResult tr = finetune_target(model, rows, sp.train, sp.val, tc);
    FrozenReport rep = verify_frozen(model, mask, ref);

    auto probs = predict_probs_gftt(model, rows, sp.test);
    std::vector<int> labels;
    for (int i : sp.test) labels.push_back(rows[i].label);

    MetricsRecord rec;
    rec.seed = seed;
    rec.auc = compute_auc(probs, labels);
    rec.acc = compute_acc(probs, labels);
    rec.best_epoch = tr.best_epoch;
    rec.wall_time_s = seconds_since(t0);

    const std::string dir = cfg.out_dir + "/seed_" + std::to_string(seed);
    ensure_dir(dir);
    write_text(dir + "/curve.csv", curve_csv(tr));
    write_text(dir + "/frozen_report.txt", format_frozen_report(rep));
    json metrics = {{"seed", seed},
                    {"auc", rec.auc},
                    {"acc", rec.acc},
                    {"best_epoch", rec.best_epoch},
                    {"best_val_loss", tr.best_val_loss},
                    {"wall_time_s", rec.wall_time_s}};
    write_text(dir + "/metrics.json", metrics.dump(2) + "\n");
    save_checkpoint(checkpoint_from_gftt(model, seed, mask, ck_schema), dir + "/gftt.ckpt");

    {
      std::lock_guard<std::mutex> lock(mu);
      reports.emplace_back(seed, rep);
    }
    log_info("seed %llu: test auc %.3f, acc %.3f, best epoch %d (%.1fs)",
             static_cast<unsigned long long>(seed), rec.auc, rec.acc, rec.best_epoch,
             rec.wall_time_s);
    return rec;
  };

  out.summary = run_seeds(per_seed, cfg.seeds, cfg.threads);

  std::vector<std::uint64_t> violated;
  for (const auto& [seed, rep] : reports)
    if (!rep.all_pass) violated.push_back(seed);
  if (!violated.empty()) {
    std::string list;
    for (std::size_t i = 0; i < violated.size(); ++i)
      list += (i ? ", " : "") + std::to_string(violated[i]);
    throw ContractError("frozen transplant tensors changed during target fine-tuning (seed " +
                        list + "); see seed_<s>/frozen_report.txt under " + cfg.out_dir);
  }

  std::ostringstream lines;
  for (const auto& rec : out.summary.records) {
    json j = {{"seed", rec.seed},
              {"auc", rec.auc},
              {"acc", rec.acc},
              {"best_epoch", rec.best_epoch},
              {"wall_time_s", rec.wall_time_s}};
    lines << j.dump() << "\n";
  }
  write_text(cfg.out_dir + "/metrics.jsonl", lines.str());

  const std::string auc_s = format_mean_std(out.summary.auc);
  const std::string acc_s = format_mean_std(out.summary.acc);
  write_text(cfg.out_dir + "/summary.txt", "auc " + auc_s + "\nacc " + acc_s + "\n");
  json summary = {{"strategy", cfg.strategy},
                  {"freeze_mask", mask},
                  {"auc_mean", out.summary.auc.mean},
                  {"auc_std", out.summary.auc.std},
                  {"acc_mean", out.summary.acc.mean},
                  {"acc_std", out.summary.acc.std},
                  {"auc", auc_s},
                  {"acc", acc_s},
                  {"seeds", cfg.seeds},
                  {"searched", out.searched},
                  {"hyperparams", train_config_json(base)}};
  write_text(cfg.out_dir + "/summary.json", summary.dump(2) + "\n");
  log_info("finetune: auc %s, acc %s over %zu seeds", auc_s.c_str(), acc_s.c_str(),
           cfg.seeds.size());
  return out;
}

PipelineOutcome run_pipeline(const ExperimentConfig& cfg) {
  PipelineOutcome out;
  auto phase = [](const char* name, auto&& fn) {
    log_info("pipeline: phase %s", name);
    try {
      return fn();
    } catch (const Error& e) {
      log_error("pipeline: aborted in phase %s: %s", name, e.what());
      throw;
    }
  };
  out.pretrain = phase("pretrain-source", [&] { return phase_pretrain(cfg); });
  out.transplant = phase("transplant", [&] { return phase_transplant(cfg); });
  out.finetune = phase("finetune-target", [&] { return phase_finetune(cfg); });
  log_info("pipeline: complete; test auc %s, acc %s",
           format_mean_std(out.finetune.summary.auc).c_str(),
           format_mean_std(out.finetune.summary.acc).c_str());
  return out;
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg) {
  cfg.validate();
  ensure_dir(cfg.out_dir);
  if (!fs::exists(cfg.lm_ckpt_file()) || !fs::exists(cfg.vocab_file())) {
    log_info("ablation: no pretrained LM at %s; running the pretrain phase first",
             cfg.lm_ckpt_file().c_str());
    phase_pretrain(cfg);
  } else {
    log_info("ablation: reusing %s", cfg.lm_ckpt_file().c_str());
  }

  std::vector<AblationRow> rows;
  for (const std::string& name : strategy_names()) {
    ExperimentConfig sub = cfg;
    sub.strategy = name;
    sub.out_dir = cfg.out_dir + "/strategy_" + name;
    sub.vocab_path = cfg.vocab_file();
    sub.lm_checkpoint = cfg.lm_ckpt_file();
    sub.gftt_checkpoint.clear();
    ensure_dir(sub.out_dir);
    phase_transplant(sub);
    FinetuneOutcome f = phase_finetune(sub);
    rows.push_back({name, f.summary});
  }

  std::ostringstream csv, txt;
  csv << "strategy,auc_mean,auc_std,acc_mean,acc_std\n";
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-16s %-14s %-14s\n", "strategy", "auc", "acc");
  txt << buf;
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f\n", row.strategy.c_str(),
                  row.summary.auc.mean, row.summary.auc.std, row.summary.acc.mean,
                  row.summary.acc.std);
    csv << buf;
    std::snprintf(buf, sizeof(buf), "%-16s %-14s %-14s\n", row.strategy.c_str(),
                  format_mean_std(row.summary.auc).c_str(),
                  format_mean_std(row.summary.acc).c_str());
    txt << buf;
  }
  write_text(cfg.out_dir + "/ablation.csv", csv.str());
  write_text(cfg.out_dir + "/ablation.txt", txt.str());
  log_info("ablation: wrote %s", (cfg.out_dir + "/ablation.txt").c_str());
  return rows;
}

}  // namespace lattle
