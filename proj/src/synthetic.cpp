#include "pacia/synthetic.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <set>

namespace pacia {

std::string TaskRule::describe() const {
    if (is_motif) {
        switch (motif) {
            case MotifKind::kTriangle: return fmt::format("triangle({})", types[0]);
            case MotifKind::kPath3: return fmt::format("path3({},{},{})", types[0], types[1], types[2]);
            case MotifKind::kStar3: return fmt::format("star3(center={},leaf={})", types[0], types[1]);
        }
    }
    return fmt::format("threshold(theta={:.4f})", threshold);
}

int node_type_of(const MolecularGraph& g, int node, int node_types) {
    int best = 0;
    double best_v = g.node_features.at(node, 0);
    for (int d = 1; d < node_types; ++d) {
        const double v = g.node_features.at(node, d);
        if (v > best_v) {
            best_v = v;
            best = d;
        }
    }
    return best;
}

namespace {

bool contains_triangle(const MolecularGraph& g, int type, int node_types) {
    const Tensor a = g.adjacency();
    const int n = g.node_count();
    for (int i = 0; i < n; ++i) {
        if (node_type_of(g, i, node_types) != type) continue;
        for (int j = i + 1; j < n; ++j) {
            if (a.at(i, j) == 0.0 || node_type_of(g, j, node_types) != type) continue;
            for (int k = j + 1; k < n; ++k) {
                if (a.at(i, k) != 0.0 && a.at(j, k) != 0.0 &&
                    node_type_of(g, k, node_types) == type) {
                    return true;
                }
            }
        }
    }
    return false;
}

bool contains_path3(const MolecularGraph& g, int end_a, int center, int end_c, int node_types) {
    const auto adj = g.neighbor_lists();
    const int n = g.node_count();
    for (int j = 0; j < n; ++j) {
        if (node_type_of(g, j, node_types) != center) continue;
        for (int i : adj[j]) {
            for (int k : adj[j]) {
                if (i == k) continue;
                const int ti = node_type_of(g, i, node_types);
                const int tk = node_type_of(g, k, node_types);
                if ((ti == end_a && tk == end_c) || (ti == end_c && tk == end_a)) return true;
            }
        }
    }
    return false;
}

bool contains_star3(const MolecularGraph& g, int center, int leaf, int node_types) {
    const auto adj = g.neighbor_lists();
    const int n = g.node_count();
    for (int v = 0; v < n; ++v) {
        if (node_type_of(g, v, node_types) != center) continue;
        int count = 0;
        for (int u : adj[v]) {
            if (node_type_of(g, u, node_types) == leaf) ++count;
        }
        if (count >= 3) return true;
    }
    return false;
}

double threshold_score(const TaskRule& rule, const MolecularGraph& g) {
    const int n = g.node_count();
    const int d = g.feature_dim();
    double s = 0.0;
    for (int v = 0; v < n; ++v) {
        for (int j = 0; j < d; ++j) s += rule.weights[j] * g.node_features.at(v, j);
    }
    return s / static_cast<double>(n);
}

}  // namespace

bool rule_fires(const TaskRule& rule, const MolecularGraph& g, int node_types) {
    if (rule.is_motif) {
        switch (rule.motif) {
            case MotifKind::kTriangle: return contains_triangle(g, rule.types[0], node_types);
            case MotifKind::kPath3:
                return contains_path3(g, rule.types[0], rule.types[1], rule.types[2], node_types);
            case MotifKind::kStar3: return contains_star3(g, rule.types[0], rule.types[1], node_types);
        }
    }
    return threshold_score(rule, g) > rule.threshold;
}

namespace {

MolecularGraph random_graph(const SyntheticSpec& spec, RngStream& rng,
                            std::vector<int>* types_out) {
    const int n = rng.uniform_int(spec.min_nodes, spec.max_nodes);
    std::vector<int> types(n);
    for (int i = 0; i < n; ++i) types[i] = static_cast<int>(rng.uniform_int(spec.node_types));

    MolecularGraph g;
    Tensor feats = Tensor::zeros({static_cast<std::size_t>(n),
                                  static_cast<std::size_t>(spec.feature_dim)});
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < spec.feature_dim; ++j) {
            feats.at(i, j) = rng.uniform(0.0, spec.noise) + (j == types[i] ? 1.0 : 0.0);
        }
    }
    g.node_features = std::move(feats);

    std::set<std::pair<int, int>> edge_set;
    for (int i = 1; i < n; ++i) {  // random spanning tree keeps the graph connected
        const int j = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(i)));
        edge_set.insert({std::min(i, j), std::max(i, j)});
    }
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (rng.bernoulli(spec.extra_edge_prob)) edge_set.insert({i, j});
        }
    }
    for (const auto& [u, v] : edge_set) g.edges.push_back({u, v});
    if (types_out) *types_out = std::move(types);
    return g;
}

void set_node_type(MolecularGraph& g, int node, int type, const SyntheticSpec& spec,
                   RngStream& rng) {
    for (int j = 0; j < spec.feature_dim; ++j) {
        g.node_features.at(node, j) = rng.uniform(0.0, spec.noise) + (j == type ? 1.0 : 0.0);
    }
}

void add_edge_once(MolecularGraph& g, int u, int v) {
    if (u == v) return;
    for (const auto& e : g.edges) {
        if ((e[0] == u && e[1] == v) || (e[0] == v && e[1] == u)) return;
    }
    g.edges.push_back({std::min(u, v), std::max(u, v)});
}

void plant_motif(MolecularGraph& g, const TaskRule& rule, const SyntheticSpec& spec,
                 RngStream& rng) {
    const int n = g.node_count();
    // pick three distinct nodes
    std::vector<int> ids(n);
    for (int i = 0; i < n; ++i) ids[i] = i;
    rng.shuffle(ids);
    const int a = ids[0], b = ids[1], c = ids[2];
    switch (rule.motif) {
        case MotifKind::kTriangle:
            set_node_type(g, a, rule.types[0], spec, rng);
            set_node_type(g, b, rule.types[0], spec, rng);
            set_node_type(g, c, rule.types[0], spec, rng);
            add_edge_once(g, a, b);
            add_edge_once(g, b, c);
            add_edge_once(g, a, c);
            break;
        case MotifKind::kPath3:
            set_node_type(g, a, rule.types[0], spec, rng);
            set_node_type(g, b, rule.types[1], spec, rng);
            set_node_type(g, c, rule.types[2], spec, rng);
            add_edge_once(g, a, b);
            add_edge_once(g, b, c);
            break;
        case MotifKind::kStar3: {
            const int d = ids[3];  // min_nodes >= 4 guarantees a fourth node
            set_node_type(g, a, rule.types[0], spec, rng);
            set_node_type(g, b, rule.types[1], spec, rng);
            set_node_type(g, c, rule.types[1], spec, rng);
            set_node_type(g, d, rule.types[1], spec, rng);
            add_edge_once(g, a, b);
            add_edge_once(g, a, c);
            add_edge_once(g, a, d);
            break;
        }
    }
}

TaskRule draw_motif_rule(const SyntheticSpec& spec, RngStream& rng,
                         std::set<std::string>& used) {
    const int t = spec.node_types;
    for (int attempt = 0; attempt < spec.max_attempts; ++attempt) {
        TaskRule rule;
        rule.is_motif = true;
        switch (rng.uniform_int(0, 2)) {
            case 0:
                rule.motif = MotifKind::kTriangle;
                rule.types = {static_cast<int>(rng.uniform_int(t)), 0, 0};
                break;
            case 1: {
                rule.motif = MotifKind::kPath3;
                int a = static_cast<int>(rng.uniform_int(t));
                int b = static_cast<int>(rng.uniform_int(t));
                int c = static_cast<int>(rng.uniform_int(t));
                if (a > c) std::swap(a, c);  // unordered ends
                rule.types = {a, b, c};
                break;
            }
            default:
                rule.motif = MotifKind::kStar3;
                rule.types = {static_cast<int>(rng.uniform_int(t)),
                              static_cast<int>(rng.uniform_int(t)), 0};
                break;
        }
        if (used.insert(rule.describe()).second) return rule;
    }
    throw std::runtime_error(
        "synthetic spec infeasible: motif family exhausted before finding a fresh rule");
}

std::vector<LabeledGraph> build_motif_task(const TaskRule& rule, int graphs_per_task,
                                           const SyntheticSpec& spec, RngStream& rng) {
    std::vector<LabeledGraph> pool;
    const int n_active = graphs_per_task / 2;
    for (int i = 0; i < graphs_per_task; ++i) {
        const int want = i < n_active ? 1 : 0;
        bool done = false;
        for (int attempt = 0; attempt < spec.max_attempts && !done; ++attempt) {
            MolecularGraph g = random_graph(spec, rng, nullptr);
            if (want == 1) plant_motif(g, rule, spec, rng);
            if (rule_fires(rule, g, spec.node_types) == (want == 1)) {
                pool.push_back(LabeledGraph{std::move(g), want});
                done = true;
            }
        }
        if (!done) {
            throw std::runtime_error(fmt::format(
                "synthetic spec infeasible: could not generate a graph with label {} for rule {} "
                "in {} attempts",
                want, rule.describe(), spec.max_attempts));
        }
    }
    return pool;
}

std::vector<LabeledGraph> build_threshold_task(TaskRule& rule, int graphs_per_task,
                                               const SyntheticSpec& spec, RngStream& rng) {
    for (int attempt = 0; attempt < spec.max_attempts; ++attempt) {
        std::vector<MolecularGraph> graphs;
        std::vector<double> scores;
        graphs.reserve(graphs_per_task);
        for (int i = 0; i < graphs_per_task; ++i) {
            graphs.push_back(random_graph(spec, rng, nullptr));
            scores.push_back(0.0);
        }
        for (int i = 0; i < graphs_per_task; ++i) {
            double s = 0.0;
            const MolecularGraph& g = graphs[i];
            for (int v = 0; v < g.node_count(); ++v) {
                for (int j = 0; j < g.feature_dim(); ++j) {
                    s += rule.weights[j] * g.node_features.at(v, j);
                }
            }
            scores[i] = s / g.node_count();
        }
        // threshold at the midpoint of the two middle scores: balanced labels
        std::vector<double> sorted = scores;
        std::sort(sorted.begin(), sorted.end());
        const int mid = graphs_per_task / 2;
        const double theta = 0.5 * (sorted[mid - 1] + sorted[mid]);
        if (sorted[mid - 1] == theta || sorted[mid] == theta) continue;  // degenerate split
        rule.threshold = theta;

        std::vector<LabeledGraph> pool;
        int n_pos = 0;
        for (int i = 0; i < graphs_per_task; ++i) {
            const int label = scores[i] > theta ? 1 : 0;
            n_pos += label;
            pool.push_back(LabeledGraph{std::move(graphs[i]), label});
        }
        const double frac = static_cast<double>(n_pos) / graphs_per_task;
        if (frac < spec.balance_lo || frac > spec.balance_hi) continue;
        return pool;
    }
    throw std::runtime_error(fmt::format(
        "synthetic spec infeasible: threshold task balance not met in {} attempts",
        spec.max_attempts));
}

}  // namespace

std::vector<SyntheticTask> generate_synthetic_tasks(std::uint64_t seed, int n_tasks,
                                                    int graphs_per_task,
                                                    const SyntheticSpec& spec) {
    if (n_tasks < 0 || graphs_per_task < 0) {
        throw std::runtime_error("generate_synthetic_tasks: negative counts");
    }
    if (n_tasks > 0 && (graphs_per_task < 4 || graphs_per_task % 2 != 0)) {
        throw std::runtime_error("generate_synthetic_tasks: graphs_per_task must be even and >= 4");
    }
    if (spec.min_nodes < 4 || spec.max_nodes < spec.min_nodes ||
        spec.node_types > spec.feature_dim || spec.node_types < 1 || spec.noise >= 0.5) {
        throw std::runtime_error("generate_synthetic_tasks: invalid spec");
    }

    std::vector<SyntheticTask> out;
    std::set<std::string> used_rules;
    for (int t = 0; t < n_tasks; ++t) {
        RngStream rng(derive_seed(seed, 0x7461736bULL, static_cast<std::uint64_t>(t)));
        SyntheticTask st;
        if (t % 2 == 0) {
            st.rule = draw_motif_rule(spec, rng, used_rules);
            st.task.pool = build_motif_task(st.rule, graphs_per_task, spec, rng);
        } else {
            st.rule.is_motif = false;
            st.rule.weights.resize(spec.feature_dim);
            double norm = 0.0;
            for (double& w : st.rule.weights) {
                w = rng.normal();
                norm += w * w;
            }
            norm = std::sqrt(norm);
            for (double& w : st.rule.weights) w /= norm;
            st.task.pool = build_threshold_task(st.rule, graphs_per_task, spec, rng);
        }
        st.task.task_id = fmt::format("syn-{:04d}-{}", t, st.rule.is_motif ? "motif" : "thr");
        for (const LabeledGraph& lg : st.task.pool) {
            lg.graph.validate();
            if (rule_fires(st.rule, lg.graph, spec.node_types) != (lg.label == 1)) {
                throw std::runtime_error("internal: generated label disagrees with its rule");
            }
        }
        out.push_back(std::move(st));
    }
    return out;
}

std::vector<Task> generate_tasks(std::uint64_t seed, int n_tasks, int graphs_per_task,
                                 const SyntheticSpec& spec) {
    std::vector<Task> tasks;
    for (SyntheticTask& st : generate_synthetic_tasks(seed, n_tasks, graphs_per_task, spec)) {
        tasks.push_back(std::move(st.task));
    }
    return tasks;
}

}  // namespace pacia
