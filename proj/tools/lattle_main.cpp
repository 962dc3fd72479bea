// lattle: cross-domain tabular transfer via attention transplants.
//
//   gen-synth        write a disjoint-feature source/target table pair
//   pretrain-source  fine-tune the decoder LM on serialized source rows
//   transplant       copy frozen K/V projections into a fresh gFTT
//   finetune-target  per-seed target fine-tuning + metrics
//   run-pipeline     the three phases end to end
//   ablation         strategy sweep incl. the no-transfer control
//
// Exit codes: 0 ok, 1 config/usage, 2 data, 3 training, 4 contract violation.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>

#include <CLI11.hpp>

#include "lattle/config.hpp"
#include "lattle/log.hpp"
#include "lattle/pipeline.hpp"
#include "lattle/synth.hpp"
#include "lattle/tabular.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::string source_csv, target_csv, out_dir, strategy, seeds;
  int threads = 0;  // 0 = keep config default
};

std::vector<std::uint64_t> parse_seeds_flag(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t comma = s.find(',', pos);
    if (comma == std::string::npos) comma = s.size();
    std::string item = s.substr(pos, comma - pos);
    if (!item.empty()) {
      try {
        std::size_t used = 0;
        out.push_back(std::stoull(item, &used));
        if (used != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw lattle::ConfigError("--seeds: '" + item + "' is not an unsigned integer");
      }
    }
    pos = comma + 1;
  }
  if (out.empty()) throw lattle::ConfigError("--seeds: expected a comma-separated list");
  return out;
}

lattle::ExperimentConfig resolve_config(const CommonOpts& o) {
  lattle::ExperimentConfig cfg;
  if (!o.config_path.empty()) cfg = lattle::parse_experiment_config(o.config_path);
  if (!o.source_csv.empty()) cfg.source_csv = o.source_csv;
  if (!o.target_csv.empty()) cfg.target_csv = o.target_csv;
  if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
  if (!o.strategy.empty()) cfg.strategy = o.strategy;
  if (!o.seeds.empty()) cfg.seeds = parse_seeds_flag(o.seeds);
  if (o.threads > 0) cfg.threads = o.threads;
  return cfg;
}

void add_common(CLI::App* sub, CommonOpts& o, bool needs_config) {
  auto* c = sub->add_option("-c,--config", o.config_path,
                            "experiment file with flat `key = value` lines");
  if (needs_config) c->required();
  sub->add_option("--source", o.source_csv, "override source_csv");
  sub->add_option("--target", o.target_csv, "override target_csv");
  sub->add_option("--out", o.out_dir, "override out_dir");
  sub->add_option("--threads", o.threads, "parallel seed workers")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lattle: tabular transfer learning via frozen K/V attention transplants"};
  app.require_subcommand(1);
  std::function<void()> action;

  // ---- gen-synth ----
  struct {
    std::uint64_t seed = 0;
    std::string out = "data";
    int source_samples = 2000, source_features = 5, source_cats = 3;
    int target_samples = 500, target_features = 4, target_cats = 2;
    int classes = 2;
    double margin = 3.0;
  } gen;
  {
    auto* sub = app.add_subcommand("gen-synth", "generate a disjoint-feature table pair");
    sub->add_option("--seed", gen.seed, "generator seed (same seed -> identical csv bytes)");
    sub->add_option("--out", gen.out, "output directory")->capture_default_str();
    sub->add_option("--source-samples", gen.source_samples)->capture_default_str();
    sub->add_option("--source-features", gen.source_features, "numeric source features")
        ->capture_default_str();
    sub->add_option("--source-cats", gen.source_cats, "categorical source features")
        ->capture_default_str();
    sub->add_option("--target-samples", gen.target_samples)->capture_default_str();
    sub->add_option("--target-features", gen.target_features, "numeric target features")
        ->capture_default_str();
    sub->add_option("--target-cats", gen.target_cats, "categorical target features")
        ->capture_default_str();
    sub->add_option("--classes", gen.classes)->capture_default_str();
    sub->add_option("--margin", gen.margin, "class-center separation")->capture_default_str();
    sub->callback([&] {
      action = [&] {
        lattle::SynthSpec src = lattle::default_source_spec();
        src.n_samples = gen.source_samples;
        src.n_numeric = gen.source_features;
        src.n_categorical = gen.source_cats;
        src.n_classes = gen.classes;
        src.margin = gen.margin;
        lattle::SynthSpec tgt = lattle::default_target_spec();
        tgt.n_samples = gen.target_samples;
        tgt.n_numeric = gen.target_features;
        tgt.n_categorical = gen.target_cats;
        tgt.n_classes = gen.classes;
        tgt.margin = gen.margin;
        auto [source, target] = lattle::gen_synthetic_pair(gen.seed, src, tgt);
        std::filesystem::create_directories(gen.out);
        lattle::save_csv(source, gen.out + "/source.csv");
        lattle::save_schema(source.schema, lattle::schema_path_for(gen.out + "/source.csv"));
        lattle::save_csv(target, gen.out + "/target.csv");
        lattle::save_schema(target.schema, lattle::schema_path_for(gen.out + "/target.csv"));
        lattle::log_info("gen-synth: wrote %s/{source,target}.csv (+ .schema)",
                         gen.out.c_str());
      };
    });
  }

  // ---- phase subcommands ----
  CommonOpts pre, tra, fin, pipe, abl;
  {
    auto* sub = app.add_subcommand("pretrain-source",
                                   "fine-tune the decoder LM on serialized source rows");
    add_common(sub, pre, true);
    sub->callback([&] {
      action = [&] { lattle::phase_pretrain(resolve_config(pre)); };
    });
  }
  {
    auto* sub = app.add_subcommand(
        "transplant", "copy frozen top-layer K/V projections into a fresh gFTT");
    add_common(sub, tra, true);
    sub->add_option("--strategy", tra.strategy,
                    "proposed | top-to-two | toptwo-to-two | none");
    sub->callback([&] {
      action = [&] { lattle::phase_transplant(resolve_config(tra)); };
    });
  }
  {
    auto* sub =
        app.add_subcommand("finetune-target", "per-seed target fine-tuning and metrics");
    add_common(sub, fin, true);
    sub->add_option("--seeds", fin.seeds, "comma-separated seed list override");
    sub->callback([&] {
      action = [&] { lattle::phase_finetune(resolve_config(fin)); };
    });
  }
  {
    auto* sub = app.add_subcommand("run-pipeline", "all three phases end to end");
    add_common(sub, pipe, true);
    sub->add_option("--seeds", pipe.seeds, "comma-separated seed list override");
    sub->add_option("--strategy", pipe.strategy,
                    "proposed | top-to-two | toptwo-to-two | none");
    sub->callback([&] {
      action = [&] { lattle::run_pipeline(resolve_config(pipe)); };
    });
  }
  {
    auto* sub = app.add_subcommand(
        "ablation", "strategy sweep sharing one pretrained LM (incl. no-transfer control)");
    add_common(sub, abl, true);
    sub->add_option("--seeds", abl.seeds, "comma-separated seed list override");
    sub->callback([&] {
      action = [&] { lattle::run_ablation(resolve_config(abl)); };
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    action();
  } catch (const lattle::Error& e) {
    lattle::log_error("%s", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    lattle::log_error("internal error: %s", e.what());
    return 1;
  }
  return 0;
}
