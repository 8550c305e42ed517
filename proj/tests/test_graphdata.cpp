#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "pacia/synthetic.hpp"
#include "pacia/task_io.hpp"

using namespace pacia;

namespace {

std::string write_temp(const std::string& contents) {
    static int counter = 0;
    std::string path = "graphdata_test_" + std::to_string(counter++) + ".jsonl";
    std::ofstream out(path);
    out << contents;
    return path;
}

// Independent motif oracle: exhaustive search over node tuples, written
// against the adjacency matrix rather than the generator's neighbor lists.
int oracle_type(const MolecularGraph& g, int v, int t) {
    int arg = 0;
    for (int d = 1; d < t; ++d) {
        if (g.node_features.at(v, d) > g.node_features.at(v, arg)) arg = d;
    }
    return arg;
}

bool oracle_contains(const TaskRule& rule, const MolecularGraph& g, int t) {
    const Tensor a = g.adjacency();
    const int n = g.node_count();
    auto adj = [&](int i, int j) { return a.at(i, j) != 0.0; };
    if (!rule.is_motif) {
        double s = 0.0;
        for (int v = 0; v < n; ++v) {
            for (int d = 0; d < g.feature_dim(); ++d) {
                s += rule.weights[d] * g.node_features.at(v, d);
            }
        }
        return s / n > rule.threshold;
    }
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            for (int k = 0; k < n; ++k) {
                if (i == j || j == k || i == k) continue;
                const int ti = oracle_type(g, i, t);
                const int tj = oracle_type(g, j, t);
                const int tk = oracle_type(g, k, t);
                switch (rule.motif) {
                    case MotifKind::kTriangle:
                        if (adj(i, j) && adj(j, k) && adj(i, k) && ti == rule.types[0] &&
                            tj == rule.types[0] && tk == rule.types[0]) {
                            return true;
                        }
                        break;
                    case MotifKind::kPath3:
                        if (adj(i, j) && adj(j, k) && ti == rule.types[0] &&
                            tj == rule.types[1] && tk == rule.types[2]) {
                            return true;
                        }
                        break;
                    case MotifKind::kStar3: {
                        if (ti != rule.types[0]) continue;
                        for (int l = 0; l < n; ++l) {
                            if (l == i || l == j || l == k) continue;
                            if (adj(i, j) && adj(i, k) && adj(i, l) && tj == rule.types[1] &&
                                tk == rule.types[1] && oracle_type(g, l, t) == rule.types[1]) {
                                return true;
                            }
                        }
                        break;
                    }
                }
            }
        }
    }
    return false;
}

}  // namespace

TEST_CASE("load_tasks: minimal well-formed input") {
    const std::string path = write_temp(
        R"({"task_id":"t0","graphs":[{"nodes":[[0.5,1.0],[1.5,0.0]],"edges":[[0,1,[0.3]]],"label":1}]})"
        "\n");
    std::vector<Task> tasks = load_tasks(path);
    REQUIRE(tasks.size() == 1);
    CHECK(tasks[0].task_id == "t0");
    REQUIRE(tasks[0].pool.size() == 1);
    const LabeledGraph& lg = tasks[0].pool[0];
    CHECK(lg.graph.node_count() == 2);
    CHECK(lg.graph.edge_count() == 1);
    CHECK(lg.label == 1);
    CHECK(lg.one_hot() == std::array<double, 2>{0.0, 1.0});
    std::remove(path.c_str());
}

TEST_CASE("load_tasks: dangling edge names the line and edge") {
    const std::string path = write_temp(
        R"({"task_id":"t0","graphs":[{"nodes":[[1],[2],[3]],"edges":[[0,5]],"label":0}]})"
        "\n");
    try {
        load_tasks(path);
        FAIL("expected an error");
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("line 1") != std::string::npos);
        CHECK(msg.find("edge 0") != std::string::npos);
    }
    std::remove(path.c_str());
}

TEST_CASE("load_tasks: empty file gives an empty task list") {
    const std::string path = write_temp("");
    CHECK(load_tasks(path).empty());
    std::remove(path.c_str());
}

TEST_CASE("load_tasks: feature dimension validated across the whole file") {
    const std::string path = write_temp(
        R"({"task_id":"a","graphs":[{"nodes":[[1,2]],"edges":[],"label":0}]})"
        "\n"
        R"({"task_id":"b","graphs":[{"nodes":[[1,2,3]],"edges":[],"label":1}]})"
        "\n");
    CHECK_THROWS_WITH_AS(load_tasks(path), doctest::Contains("feature dim"), std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("load_tasks: parse error carries the line number") {
    const std::string path = write_temp("{\"task_id\": \"ok\", \"graphs\": []}\n{nonsense\n");
    CHECK_THROWS_WITH_AS(load_tasks(path), doctest::Contains("line 2"), std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("save/load round trip preserves values") {
    SyntheticSpec spec;
    std::vector<Task> tasks = generate_tasks(3, 4, 8, spec);
    const std::string path = write_temp("");
    save_tasks(tasks, path);
    std::vector<Task> back = load_tasks(path);
    REQUIRE(back.size() == tasks.size());
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        REQUIRE(back[t].pool.size() == tasks[t].pool.size());
        for (std::size_t g = 0; g < tasks[t].pool.size(); ++g) {
            CHECK(back[t].pool[g].label == tasks[t].pool[g].label);
            CHECK(back[t].pool[g].graph.edges == tasks[t].pool[g].graph.edges);
            const Tensor& a = back[t].pool[g].graph.node_features;
            const Tensor& b = tasks[t].pool[g].graph.node_features;
            REQUIRE(a.size() == b.size());
            for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
        }
    }
    std::remove(path.c_str());
}

TEST_CASE("generator: identical seeds give byte-identical task files") {
    SyntheticSpec spec;
    std::vector<Task> a = generate_tasks(7, 6, 12, spec);
    std::vector<Task> b = generate_tasks(7, 6, 12, spec);
    const std::string pa = write_temp("");
    const std::string pb = write_temp("");
    save_tasks(a, pa);
    save_tasks(b, pb);
    std::ifstream fa(pa), fb(pb);
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    CHECK(sa.str() == sb.str());
    CHECK(!sa.str().empty());
    std::remove(pa.c_str());
    std::remove(pb.c_str());
}

TEST_CASE("generator: labels agree with the hidden rule under an independent oracle") {
    SyntheticSpec spec;
    std::vector<SyntheticTask> tasks = generate_synthetic_tasks(19, 8, 16, spec);
    for (const SyntheticTask& st : tasks) {
        for (const LabeledGraph& lg : st.task.pool) {
            CHECK(oracle_contains(st.rule, lg.graph, spec.node_types) == (lg.label == 1));
        }
    }
}

TEST_CASE("generator: per-task balance within [0.3, 0.7]") {
    SyntheticSpec spec;
    for (const Task& t : generate_tasks(5, 10, 20, spec)) {
        int pos = 0;
        for (const LabeledGraph& lg : t.pool) pos += lg.label;
        const double frac = static_cast<double>(pos) / t.pool.size();
        CHECK(frac >= 0.3);
        CHECK(frac <= 0.7);
    }
}

TEST_CASE("generator: n_tasks = 0 gives an empty list") {
    SyntheticSpec spec;
    CHECK(generate_tasks(1, 0, 8, spec).empty());
}

TEST_CASE("generator: infeasible spec raises an explicit error") {
    // a single node type and a complete graph make motif-free (inactive)
    // graphs impossible
    SyntheticSpec spec;
    spec.node_types = 1;
    spec.extra_edge_prob = 1.0;
    spec.min_nodes = 6;
    spec.max_nodes = 6;
    spec.max_attempts = 50;
    CHECK_THROWS_WITH_AS(generate_tasks(1, 1, 4, spec), doctest::Contains("infeasible"),
                         std::runtime_error);
}

TEST_CASE("sample_episode: balanced K=1 forces one per class") {
    Task task;
    task.task_id = "tiny";
    for (int i = 0; i < 4; ++i) {
        LabeledGraph lg;
        lg.graph.node_features = Tensor::matrix(1, 2, {double(i), 1.0});
        lg.label = i == 0 ? 1 : 0;  // 1 active + 3 inactive
        task.pool.push_back(lg);
    }
    RngStream rng(4);
    Episode ep = sample_episode(task, SupportMode::kBalanced, 1, 2, rng);
    CHECK(ep.support_size() == 2);
    CHECK(ep.support_pos.size() == 1);
    CHECK(ep.support_neg.size() == 1);
    CHECK(ep.query_size() == 2);
}

TEST_CASE("sample_episode: sized N=16 with M=16 queries") {
    SyntheticSpec spec;
    std::vector<Task> tasks = generate_tasks(11, 1, 64, spec);
    RngStream rng(2);
    Episode ep = sample_episode(tasks[0], SupportMode::kSized, 16, 16, rng);
    CHECK(ep.support_size() == 16);
    CHECK(ep.query_size() == 16);
    CHECK(!ep.support_pos.empty());
    CHECK(!ep.support_neg.empty());
}

TEST_CASE("sample_episode: support and query stay disjoint; resampling reproduces") {
    SyntheticSpec spec;
    std::vector<Task> tasks = generate_tasks(13, 2, 32, spec);
    RngStream rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        RngStream before = rng;  // copy of the stream state
        Episode ep = sample_episode(tasks[trial % 2], SupportMode::kBalanced, 3, 8, rng);
        std::set<int> support(ep.support.begin(), ep.support.end());
        for (int q : ep.query) CHECK(support.count(q) == 0);
        CHECK(support.size() == ep.support.size());

        Episode again = sample_episode(tasks[trial % 2], SupportMode::kBalanced, 3, 8, before);
        CHECK(again.support == ep.support);
        CHECK(again.query == ep.query);
    }
}

TEST_CASE("sample_episode: insufficient pool reports required vs available") {
    Task task;
    task.task_id = "small";
    for (int i = 0; i < 3; ++i) {
        LabeledGraph lg;
        lg.graph.node_features = Tensor::matrix(1, 1, {1.0});
        lg.label = i == 0 ? 1 : 0;
        task.pool.push_back(lg);
    }
    RngStream rng(1);
    try {
        sample_episode(task, SupportMode::kBalanced, 2, 1, rng);
        FAIL("expected an error");
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("K=2") != std::string::npos);
        CHECK(msg.find("1 active") != std::string::npos);
    }
}

TEST_CASE("graph validation catches self-loops") {
    MolecularGraph g;
    g.node_features = Tensor::matrix(2, 1, {1.0, 2.0});
    g.edges.push_back({1, 1});
    CHECK_THROWS_WITH_AS(g.validate(), doctest::Contains("self-loop"), std::runtime_error);
}
