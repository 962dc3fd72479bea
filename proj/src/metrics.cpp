#include "lattle/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

namespace lattle {

namespace {

// Mann-Whitney AUC with midranks; exact for ties.
double binary_auc(const std::vector<double>& score, const std::vector<char>& positive) {
  const int n = static_cast<int>(score.size());
  long long n_pos = 0;
  for (char p : positive) n_pos += p;
  const long long n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw TrainingError("compute_auc: need both positive and negative samples");

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return score[a] < score[b]; });

  double rank_sum_pos = 0.0;
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && score[order[j + 1]] == score[order[i]]) ++j;
    const double midrank = (i + j + 2) / 2.0;  // 1-based ranks i+1..j+1
    for (int k = i; k <= j; ++k)
      if (positive[order[k]]) rank_sum_pos += midrank;
    i = j + 1;
  }
  const double u = rank_sum_pos - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

}  // namespace

double compute_auc(const std::vector<std::vector<double>>& scores,
                   const std::vector<int>& labels) {
  const int n = static_cast<int>(labels.size());
  if (n < 2 || scores.size() != labels.size())
    throw TrainingError("compute_auc: need >= 2 scored samples");
  const int c = static_cast<int>(scores[0].size());
  for (const auto& row : scores)
    if (static_cast<int>(row.size()) != c)
      throw TrainingError("compute_auc: ragged score matrix");

  std::set<int> present(labels.begin(), labels.end());
  if (*present.begin() < 0 || (c > 1 && *present.rbegin() >= c))
    throw IndexError("compute_auc: label outside score columns");
  if (present.size() < 2) throw TrainingError("compute_auc: only one class present");

  if (c <= 2) {
    const int col = c - 1;  // probability of the positive class
    std::vector<double> s(n);
    std::vector<char> pos(n);
    for (int i = 0; i < n; ++i) {
      s[i] = scores[i][col];
      pos[i] = labels[i] == 1;
    }
    return binary_auc(s, pos);
  }

  double total = 0.0;
  for (int cls : present) {
    std::vector<double> s(n);
    std::vector<char> pos(n);
    for (int i = 0; i < n; ++i) {
      s[i] = scores[i][cls];
      pos[i] = labels[i] == cls;
    }
    total += binary_auc(s, pos);
  }
  return total / static_cast<double>(present.size());
}

double compute_acc(const std::vector<std::vector<double>>& scores,
                   const std::vector<int>& labels) {
  if (labels.empty() || scores.size() != labels.size())
    throw DataError("compute_acc: empty or mismatched inputs");
  long long correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    int best = 0;
    for (int cand = 1; cand < static_cast<int>(scores[i].size()); ++cand)
      if (scores[i][cand] > scores[i][best]) best = cand;  // ties keep the lowest index
    if (best == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

MeanStd mean_std(const std::vector<double>& xs) {
  if (xs.empty()) throw DataError("mean_std: empty sample");
  MeanStd ms;
  for (double x : xs) ms.mean += x;
  ms.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double acc = 0.0;
    for (double x : xs) acc += (x - ms.mean) * (x - ms.mean);
    ms.std = std::sqrt(acc / static_cast<double>(xs.size() - 1));
  }
  return ms;
}

std::string format_mean_std(const MeanStd& ms) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f (%.2f)", ms.mean, ms.std);
  return buf;
}

}  // namespace lattle
