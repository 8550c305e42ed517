#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pacia/tape.hpp"

namespace pacia {

struct GradCheckBlock {
    std::string name;
    double max_rel_err = 0.0;
    std::size_t worst_entry = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    std::size_t entries_checked = 0;
};

struct GradCheckReport {
    std::vector<GradCheckBlock> blocks;
    double max_rel_err = 0.0;
    bool pass(double tol) const { return max_rel_err <= tol; }
    std::string summary() const;
};

// The checked function builds a fresh tape, runs the forward pass and returns
// the scalar loss value; when `with_grad` is set it must also run backward so
// that gradients accumulate into the store. It must be deterministic
// (dropout disabled); two disagreeing forward passes raise an error.
using CheckedFn = std::function<double(bool with_grad)>;

// Central finite differences against the analytic gradients of every
// parameter in `store`. `max_entries_per_block` = 0 checks every entry;
// otherwise entries are probed at an even stride.
GradCheckReport finite_diff_check(ParamStore& store, const CheckedFn& f, double h,
                                  std::size_t max_entries_per_block = 0);

// Relative error with a small floor so finite-difference noise on near-zero
// gradients does not dominate.
double grad_rel_err(double analytic, double numeric);

}  // namespace pacia
