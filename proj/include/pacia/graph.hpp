#pragma once

#include <array>
#include <string>
#include <vector>

#include "pacia/rng.hpp"
#include "pacia/tensor.hpp"

namespace pacia {

// Attributed undirected graph. Each edge is stored once and traversed both
// ways; per-edge feature vectors may be empty (unused by the GIN update).
struct MolecularGraph {
    Tensor node_features;  // [n_nodes, feature_dim]
    std::vector<std::array<int, 2>> edges;
    std::vector<std::vector<double>> edge_features;  // parallel to edges, possibly empty vectors

    int node_count() const { return static_cast<int>(node_features.rows()); }
    int edge_count() const { return static_cast<int>(edges.size()); }
    int feature_dim() const { return static_cast<int>(node_features.cols()); }

    // Dense symmetric 0/1 adjacency without self loops.
    Tensor adjacency() const;
    std::vector<std::vector<int>> neighbor_lists() const;

    // Throws with a description of the first violated invariant.
    void validate() const;
};

// Label convention: 0 = inactive, 1 = active; one-hot is [inactive, active].
struct LabeledGraph {
    MolecularGraph graph;
    int label = 0;

    std::array<double, 2> one_hot() const {
        return {label == 0 ? 1.0 : 0.0, label == 1 ? 1.0 : 0.0};
    }
};

struct Task {
    std::string task_id;
    std::vector<LabeledGraph> pool;

    std::vector<int> indices_with_label(int label) const;
};

enum class SupportMode { kBalanced, kSized };

struct Episode {
    const Task* task = nullptr;
    std::vector<int> support;  // pool indices
    std::vector<int> query;    // pool indices
    std::vector<int> support_pos;  // positions within `support`
    std::vector<int> support_neg;

    int support_size() const { return static_cast<int>(support.size()); }
    int query_size() const { return static_cast<int>(query.size()); }
    const LabeledGraph& support_at(int i) const { return task->pool[support[i]]; }
    const LabeledGraph& query_at(int i) const { return task->pool[query[i]]; }

    // Returns a copy with support entries reordered by `perm` (and the class
    // index sets rebuilt). Used by permutation-invariance checks.
    Episode permuted_support(const std::vector<int>& perm) const;
};

// Balanced mode: size_arg = K per class. Sized mode: size_arg = total support
// size, redrawn until both classes are present (bounded attempts).
Episode sample_episode(const Task& task, SupportMode mode, int size_arg, int query_size,
                       RngStream& rng);

}  // namespace pacia
