#include "pacia/graph.hpp"

#include <fmt/format.h>

#include <algorithm>

namespace pacia {

Tensor MolecularGraph::adjacency() const {
    const std::size_t n = node_features.rows();
    Tensor a = Tensor::zeros({n, n});
    for (const auto& e : edges) {
        a.at(e[0], e[1]) = 1.0;
        a.at(e[1], e[0]) = 1.0;
    }
    return a;
}

std::vector<std::vector<int>> MolecularGraph::neighbor_lists() const {
    std::vector<std::vector<int>> adj(node_count());
    for (const auto& e : edges) {
        adj[e[0]].push_back(e[1]);
        adj[e[1]].push_back(e[0]);
    }
    return adj;
}

void MolecularGraph::validate() const {
    if (node_features.rank() != 2 || node_features.rows() == 0) {
        throw std::runtime_error("graph must have >= 1 node with a fixed feature dim");
    }
    const int n = node_count();
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const auto& e = edges[i];
        if (e[0] < 0 || e[1] < 0 || e[0] >= n || e[1] >= n) {
            throw std::runtime_error(
                fmt::format("edge {} references node ({},{}) outside 0..{}", i, e[0], e[1], n - 1));
        }
        if (e[0] == e[1]) {
            throw std::runtime_error(fmt::format("edge {} is a self-loop on node {}", i, e[0]));
        }
    }
    if (!edge_features.empty() && edge_features.size() != edges.size()) {
        throw std::runtime_error("edge feature list length does not match edge list");
    }
}

std::vector<int> Task::indices_with_label(int label) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (pool[i].label == label) out.push_back(static_cast<int>(i));
    }
    return out;
}

Episode Episode::permuted_support(const std::vector<int>& perm) const {
    Episode e;
    e.task = task;
    e.query = query;
    e.support.resize(support.size());
    for (std::size_t i = 0; i < perm.size(); ++i) e.support[i] = support[perm[i]];
    for (std::size_t i = 0; i < e.support.size(); ++i) {
        (task->pool[e.support[i]].label == 1 ? e.support_pos : e.support_neg)
            .push_back(static_cast<int>(i));
    }
    return e;
}

namespace {

Episode finalize(const Task& task, std::vector<int> support, std::vector<int> query) {
    Episode e;
    e.task = &task;
    e.support = std::move(support);
    e.query = std::move(query);
    for (std::size_t i = 0; i < e.support.size(); ++i) {
        (task.pool[e.support[i]].label == 1 ? e.support_pos : e.support_neg)
            .push_back(static_cast<int>(i));
    }
    return e;
}

std::vector<int> draw_without_replacement(std::vector<int> pool, std::size_t k, RngStream& rng) {
    rng.shuffle(pool);
    pool.resize(k);
    return pool;
}

}  // namespace

Episode sample_episode(const Task& task, SupportMode mode, int size_arg, int query_size,
                       RngStream& rng) {
    const std::vector<int> pos = task.indices_with_label(1);
    const std::vector<int> neg = task.indices_with_label(0);

    std::vector<int> support;
    if (mode == SupportMode::kBalanced) {
        const int k = size_arg;
        if (static_cast<int>(pos.size()) < k || static_cast<int>(neg.size()) < k) {
            throw std::runtime_error(fmt::format(
                "task '{}': balanced K={} needs {} per class, pool has {} active / {} inactive",
                task.task_id, k, k, pos.size(), neg.size()));
        }
        std::vector<int> sp = draw_without_replacement(pos, k, rng);
        std::vector<int> sn = draw_without_replacement(neg, k, rng);
        support.insert(support.end(), sp.begin(), sp.end());
        support.insert(support.end(), sn.begin(), sn.end());
        rng.shuffle(support);
    } else {
        const int n = size_arg;
        if (pos.empty() || neg.empty() || static_cast<int>(task.pool.size()) < n) {
            throw std::runtime_error(fmt::format(
                "task '{}': sized support N={} needs both classes in a pool of >= {} "
                "(pool has {} active / {} inactive)",
                task.task_id, n, n, pos.size(), neg.size()));
        }
        std::vector<int> all(task.pool.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
        const int kMaxAttempts = 1000;
        bool ok = false;
        for (int attempt = 0; attempt < kMaxAttempts && !ok; ++attempt) {
            support = draw_without_replacement(all, n, rng);
            bool has_pos = false, has_neg = false;
            for (int idx : support) (task.pool[idx].label == 1 ? has_pos : has_neg) = true;
            ok = has_pos && has_neg;
        }
        if (!ok) {
            throw std::runtime_error(fmt::format(
                "task '{}': could not draw a support of {} with both classes in {} attempts",
                task.task_id, n, kMaxAttempts));
        }
    }

    std::vector<int> rest;
    {
        std::vector<char> taken(task.pool.size(), 0);
        for (int idx : support) taken[idx] = 1;
        for (std::size_t i = 0; i < task.pool.size(); ++i) {
            if (!taken[i]) rest.push_back(static_cast<int>(i));
        }
    }
    if (static_cast<int>(rest.size()) < query_size) {
        throw std::runtime_error(
            fmt::format("task '{}': query size {} requested but only {} graphs remain after the "
                        "support draw",
                        task.task_id, query_size, rest.size()));
    }
    std::vector<int> query = draw_without_replacement(rest, query_size, rng);
    return finalize(task, std::move(support), std::move(query));
}

}  // namespace pacia
