#pragma once

#include <cstdint>
#include <utility>

#include "lattle/tabular.hpp"

namespace lattle {

// Shape of one synthetic table. Classes occupy Gaussian clusters in the
// numeric subspace whose centers are rescaled so the minimum pairwise center
// distance equals `margin` (cluster std is 1), which guarantees linear
// separability at large margins. Categorical features are class-conditional:
// each (feature, class) pair prefers one category with probability
// `cat_skew`, the rest uniform. Numeric values are rounded to one decimal so
// the serialized text reuses a compact token set.
struct SynthSpec {
  int n_samples = 0;
  int n_numeric = 0;
  int n_categorical = 0;
  int n_classes = 2;
  int cat_cardinality = 4;
  double margin = 3.0;
  double cat_skew = 0.6;
  std::string feature_prefix = "s";  // names "<prefix>_f0", "<prefix>_f1", ...
};

SynthSpec default_source_spec();  // 2000 x 8 (5 numeric + 3 categorical), 2 classes
SynthSpec default_target_spec();  // 500 x 6 (4 numeric + 2 categorical), 2 classes

TabularDataset gen_synthetic(std::uint64_t seed, const SynthSpec& spec);

// Source and target drawn independently from one seed; feature names are
// disjoint by construction (prefix "s" vs "t").
std::pair<TabularDataset, TabularDataset> gen_synthetic_pair(std::uint64_t seed,
                                                             SynthSpec source,
                                                             SynthSpec target);

}  // namespace lattle
