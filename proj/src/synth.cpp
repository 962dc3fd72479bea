#include "lattle/synth.hpp"

#include <cmath>
#include <numeric>

#include "lattle/rng.hpp"

namespace lattle {

SynthSpec default_source_spec() {
  SynthSpec s;
  s.n_samples = 2000;
  s.n_numeric = 5;
  s.n_categorical = 3;
  s.feature_prefix = "s";
  return s;
}

SynthSpec default_target_spec() {
  SynthSpec s;
  s.n_samples = 500;
  s.n_numeric = 4;
  s.n_categorical = 2;
  s.feature_prefix = "t";
  return s;
}

namespace {

void validate_spec(const SynthSpec& spec) {
  if (spec.n_samples < 1) throw ConfigError("synth: n_samples must be >= 1");
  if (spec.n_numeric < 1)
    throw ConfigError("synth: need at least one numeric feature for margin separability");
  if (spec.n_categorical < 0) throw ConfigError("synth: negative categorical feature count");
  if (spec.n_classes < 2) throw ConfigError("synth: need at least 2 classes");
  if (spec.cat_cardinality < 2) throw ConfigError("synth: cat_cardinality must be >= 2");
  if (!(spec.margin > 0)) throw ConfigError("synth: margin must be positive");
  if (spec.cat_skew < 0 || spec.cat_skew > 1) throw ConfigError("synth: cat_skew outside [0,1]");
  if (spec.feature_prefix.empty()) throw ConfigError("synth: empty feature prefix");
}

double round1(double v) { return std::round(v * 10.0) / 10.0; }

TabularDataset gen_impl(Rng& rng, const SynthSpec& spec) {
  validate_spec(spec);
  TabularDataset ds;
  for (int f = 0; f < spec.n_numeric + spec.n_categorical; ++f)
    ds.schema.columns.push_back({spec.feature_prefix + "_f" + std::to_string(f),
                                 f < spec.n_numeric ? ColKind::Numeric : ColKind::Categorical});
  ds.schema.label_column = "label";
  for (int c = 0; c < spec.n_classes; ++c) ds.schema.classes.push_back("c" + std::to_string(c));
  ds.schema.validate();

  // Class centers rescaled so the closest pair sits exactly `margin` apart.
  std::vector<std::vector<double>> centers(spec.n_classes,
                                           std::vector<double>(spec.n_numeric));
  double min_dist = 0.0;
  do {
    for (auto& c : centers)
      for (auto& v : c) v = rng.normal();
    min_dist = 1e300;
    for (int a = 0; a < spec.n_classes; ++a)
      for (int b = a + 1; b < spec.n_classes; ++b) {
        double d2 = 0.0;
        for (int f = 0; f < spec.n_numeric; ++f)
          d2 += (centers[a][f] - centers[b][f]) * (centers[a][f] - centers[b][f]);
        min_dist = std::min(min_dist, std::sqrt(d2));
      }
  } while (min_dist < 1e-6);
  const double scale = spec.margin / min_dist;
  for (auto& c : centers)
    for (auto& v : c) v *= scale;

  std::vector<std::vector<int>> preferred(spec.n_classes,
                                          std::vector<int>(spec.n_categorical));
  for (auto& p : preferred)
    for (auto& v : p) v = rng.uniform_int(0, spec.cat_cardinality - 1);

  for (int i = 0; i < spec.n_samples; ++i) {
    const int label = i % spec.n_classes;  // balanced classes
    std::vector<Cell> row;
    for (int f = 0; f < spec.n_numeric; ++f) {
      Cell cell;
      cell.num = round1(centers[label][f] + rng.normal());
      row.push_back(cell);
    }
    for (int f = 0; f < spec.n_categorical; ++f) {
      Cell cell;
      const int k = rng.uniform() < spec.cat_skew
                        ? preferred[label][f]
                        : rng.uniform_int(0, spec.cat_cardinality - 1);
      cell.cat = "v" + std::to_string(k);
      row.push_back(cell);
    }
    ds.rows.push_back(std::move(row));
    ds.labels.push_back(label);
  }

  std::vector<int> order(ds.n());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  TabularDataset shuffled;
  shuffled.schema = ds.schema;
  for (int idx : order) {
    shuffled.rows.push_back(std::move(ds.rows[idx]));
    shuffled.labels.push_back(ds.labels[idx]);
  }
  return shuffled;
}

}  // namespace

TabularDataset gen_synthetic(std::uint64_t seed, const SynthSpec& spec) {
  Rng rng(seed);
  return gen_impl(rng, spec);
}

std::pair<TabularDataset, TabularDataset> gen_synthetic_pair(std::uint64_t seed,
                                                             SynthSpec source,
                                                             SynthSpec target) {
  Rng root(seed);
  Rng src_rng = root.fork();
  Rng tgt_rng = root.fork();
  TabularDataset src = gen_impl(src_rng, source);
  TabularDataset tgt = gen_impl(tgt_rng, target);
  check_disjoint(src.schema, tgt.schema);
  return {std::move(src), std::move(tgt)};
}

}  // namespace lattle
