#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <vector>

#include "carebandit/error.hpp"

namespace carebandit {

/// Area under the ROC curve in the Mann-Whitney form
/// P(score+ > score-) + 0.5 P(tie), from average ranks.
inline double auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw Error("auc: scores and labels differ in length");
    const std::size_t n = scores.size();

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Twice the 1-based average rank of each tie group, kept integral.
    double rank_sum_pos2 = 0.0;
    std::size_t positives = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double rank2 = static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]] != 0) {
                rank_sum_pos2 += rank2;
                ++positives;
            }
        i = j;
    }
    const std::size_t negatives = n - positives;
    if (positives == 0 || negatives == 0) throw Error("auc undefined: labels contain a single class");

    const double np = static_cast<double>(positives);
    const double u = rank_sum_pos2 / 2.0 - np * (np + 1.0) / 2.0;
    return u / (np * static_cast<double>(negatives));
}

}  // namespace carebandit
