#pragma once

#include <vector>

namespace pacia {

struct ScoredSet {
    std::vector<double> scores;  // active-class probabilities
    std::vector<int> labels;     // 0/1
};

// Mann-Whitney statistic: fraction of (positive, negative) pairs ranked
// correctly, ties counting one half. Requires both classes.
double roc_auc(const ScoredSet& s);

// Average precision with stable input order breaking score ties. Requires at
// least one positive.
double auprc(const ScoredSet& s);

// auprc minus the positive prevalence (the random-classifier baseline).
double delta_auprc(const ScoredSet& s);

bool has_both_classes(const ScoredSet& s);

}  // namespace pacia
