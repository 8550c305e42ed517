#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pacia/graph.hpp"

namespace pacia {

struct SyntheticSpec {
    int feature_dim = 8;
    int min_nodes = 8;
    int max_nodes = 16;
    int node_types = 4;      // encoded one-hot in the leading feature dims
    double noise = 0.35;     // additive uniform feature noise in [0, noise)
    double extra_edge_prob = 0.15;  // extra edges on top of a random spanning tree
    int max_attempts = 1000;
    double balance_lo = 0.3;
    double balance_hi = 0.7;
};

enum class MotifKind { kTriangle, kPath3, kStar3 };

// A task's hidden label rule: either a planted subgraph motif over node types
// or a linear threshold on the mean node feature vector.
struct TaskRule {
    bool is_motif = false;
    // motif rule
    MotifKind motif = MotifKind::kTriangle;
    std::array<int, 3> types{0, 0, 0};
    // threshold rule
    std::vector<double> weights;
    double threshold = 0.0;

    std::string describe() const;
};

// Node type as encoded by the generator: argmax over the leading
// `node_types` feature dims.
int node_type_of(const MolecularGraph& g, int node, int node_types);

// Exhaustive motif containment / threshold evaluation. This is the
// independent oracle that labels are checked against.
bool rule_fires(const TaskRule& rule, const MolecularGraph& g, int node_types);

struct SyntheticTask {
    Task task;
    TaskRule rule;
};

// Deterministic in `seed`; every generated label agrees with the task's rule
// (re-checked via rule_fires at generation time). Throws if the balance or
// motif constraints cannot be met within spec.max_attempts.
std::vector<SyntheticTask> generate_synthetic_tasks(std::uint64_t seed, int n_tasks,
                                                    int graphs_per_task, const SyntheticSpec& spec);

// Convenience: drops the rules.
std::vector<Task> generate_tasks(std::uint64_t seed, int n_tasks, int graphs_per_task,
                                 const SyntheticSpec& spec);

}  // namespace pacia
