// Pooled binary-classification metrics used across training and evaluation.

#pragma once

#include <optional>
#include <vector>

namespace ktrace {

// Rank-statistic AUC with tied scores contributing half. Absent when labels
// are single-class.
std::optional<double> compute_auc(const std::vector<double>& scores,
                                  const std::vector<int>& labels);

// Accuracy at threshold 0.5; a score of exactly 0.5 predicts positive.
double compute_acc(const std::vector<double>& scores, const std::vector<int>& labels);

// Mean clipped binary cross entropy over already-computed probabilities.
double mean_bce(const std::vector<double>& scores, const std::vector<int>& labels);

}  // namespace ktrace
