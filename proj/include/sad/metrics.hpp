#pragma once

#include <vector>

namespace sad {

// ROC AUC by the rank-sum method with tie-averaged ranks: the probability
// that a uniformly random positive outranks a uniformly random negative,
// ties counted one half. Rejects single-class label vectors.
double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels);

}  // namespace sad
