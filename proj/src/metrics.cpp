#include "pacia/metrics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace pacia {

namespace {

void check_sizes(const ScoredSet& s) {
    if (s.scores.size() != s.labels.size()) {
        throw std::runtime_error(fmt::format("scored set: {} scores vs {} labels",
                                             s.scores.size(), s.labels.size()));
    }
    if (s.scores.empty()) throw std::runtime_error("scored set is empty");
}

}  // namespace

bool has_both_classes(const ScoredSet& s) {
    bool pos = false, neg = false;
    for (int l : s.labels) (l == 1 ? pos : neg) = true;
    return pos && neg;
}

double roc_auc(const ScoredSet& s) {
    check_sizes(s);
    if (!has_both_classes(s)) {
        throw std::runtime_error("roc_auc: needs both classes in the label set");
    }
    const std::size_t n = s.scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return s.scores[a] < s.scores[b]; });

    // midranks over tie groups; all quantities stay dyadic so the result is
    // bit-identical to explicit pair counting
    double rank_sum_pos = 0.0;
    std::size_t n_pos = 0, n_neg = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && s.scores[order[j]] == s.scores[order[i]]) ++j;
        const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (std::size_t k = i; k < j; ++k) {
            if (s.labels[order[k]] == 1) {
                rank_sum_pos += midrank;
                ++n_pos;
            } else {
                ++n_neg;
            }
        }
        i = j;
    }
    const double wins_plus_half_ties =
        rank_sum_pos - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
    return wins_plus_half_ties / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double auprc(const ScoredSet& s) {
    check_sizes(s);
    std::size_t n_pos = 0;
    for (int l : s.labels) n_pos += l == 1;
    if (n_pos == 0) throw std::runtime_error("auprc: needs at least one positive");

    const std::size_t n = s.scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return s.scores[a] > s.scores[b]; });

    double acc = 0.0;
    std::size_t tp = 0;
    for (std::size_t rank = 1; rank <= n; ++rank) {
        if (s.labels[order[rank - 1]] == 1) {
            ++tp;
            acc += static_cast<double>(tp) / static_cast<double>(rank);
        }
    }
    return acc / static_cast<double>(n_pos);
}

double delta_auprc(const ScoredSet& s) {
    double prevalence = 0.0;
    for (int l : s.labels) prevalence += l == 1;
    prevalence /= static_cast<double>(s.labels.size());
    return auprc(s) - prevalence;
}

}  // namespace pacia
