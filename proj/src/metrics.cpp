#include "sad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sad {

double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("auc_roc: scores/labels length mismatch");
    size_t n_pos = 0, n_neg = 0;
    for (int y : labels) {
        if (y == 1) {
            ++n_pos;
        } else if (y == 0) {
            ++n_neg;
        } else {
            throw std::invalid_argument("auc_roc: labels must be 0 or 1");
        }
    }
    if (n_pos == 0 || n_neg == 0) {
        throw std::invalid_argument("auc_roc: need both classes, got " + std::to_string(n_pos) + " positives and " +
                                    std::to_string(n_neg) + " negatives");
    }
    for (double s : scores) {
        if (!std::isfinite(s)) throw std::invalid_argument("auc_roc: non-finite score");
    }
    const size_t n = scores.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });
    // average ranks over tie groups (1-based)
    std::vector<double> rank(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + 1 + j + 1);
        for (size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }
    double pos_rank_sum = 0.0;
    for (size_t k = 0; k < n; ++k) {
        if (labels[k] == 1) pos_rank_sum += rank[k];
    }
    const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

}  // namespace sad
