#include "pacia/gradcheck.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace pacia {

double grad_rel_err(double analytic, double numeric) {
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-2});
    return std::fabs(analytic - numeric) / denom;
}

std::string GradCheckReport::summary() const {
    std::string s;
    for (const auto& b : blocks) {
        s += fmt::format("{:<40} max_rel_err={:.3e} (entry {}, analytic={:+.6e}, numeric={:+.6e})\n",
                         b.name, b.max_rel_err, b.worst_entry, b.analytic, b.numeric);
    }
    s += fmt::format("overall max_rel_err={:.3e}\n", max_rel_err);
    return s;
}

GradCheckReport finite_diff_check(ParamStore& store, const CheckedFn& f, double h,
                                  std::size_t max_entries_per_block) {
    if (h <= 0.0) throw std::runtime_error("finite_diff_check: h must be > 0");

    const double v1 = f(false);
    const double v2 = f(false);
    if (v1 != v2) {
        throw std::runtime_error(
            fmt::format("finite_diff_check: function is nondeterministic ({} vs {})", v1, v2));
    }

    store.zero_grads();
    f(true);
    std::vector<Tensor> analytic;
    analytic.reserve(store.size());
    for (const Param& p : store) analytic.push_back(p.grad);

    GradCheckReport report;
    for (std::size_t pi = 0; pi < store.size(); ++pi) {
        Param& p = store.at(pi);
        GradCheckBlock block;
        block.name = p.name;
        const std::size_t n = p.value.size();
        const std::size_t stride =
            (max_entries_per_block == 0 || n <= max_entries_per_block)
                ? 1
                : (n + max_entries_per_block - 1) / max_entries_per_block;
        for (std::size_t i = 0; i < n; i += stride) {
            const double orig = p.value[i];
            p.value[i] = orig + h;
            const double fp = f(false);
            p.value[i] = orig - h;
            const double fm = f(false);
            p.value[i] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double err = grad_rel_err(analytic[pi][i], numeric);
            ++block.entries_checked;
            if (err >= block.max_rel_err) {
                block.max_rel_err = err;
                block.worst_entry = i;
                block.analytic = analytic[pi][i];
                block.numeric = numeric;
            }
        }
        report.max_rel_err = std::max(report.max_rel_err, block.max_rel_err);
        report.blocks.push_back(std::move(block));
    }
    return report;
}

}  // namespace pacia
