#pragma once

#include <string>
#include <vector>

#include "lattle/errors.hpp"

namespace lattle {

// Binary: Mann-Whitney rank statistic with midranks for ties, ranking by
// scores[:,1] (or scores[:,0] when C==1 columns are given as positives).
// Multiclass: unweighted macro one-vs-rest over classes present.
double compute_auc(const std::vector<std::vector<double>>& scores,
                   const std::vector<int>& labels);

// Fraction of argmax(scores) == label; argmax ties break to the lowest index.
double compute_acc(const std::vector<std::vector<double>>& scores,
                   const std::vector<int>& labels);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n-1)
};
MeanStd mean_std(const std::vector<double>& xs);

// The papers' "0.829 (0.04)" display convention.
std::string format_mean_std(const MeanStd& ms);

}  // namespace lattle
