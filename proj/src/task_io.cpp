#include "pacia/task_io.hpp"

#include <fmt/format.h>

#include <fstream>
#include <json.hpp>

namespace pacia {

namespace {

using nlohmann::json;

MolecularGraph parse_graph(const json& jg, int line_no, int graph_no) {
    auto fail = [&](const std::string& what) -> std::runtime_error {
        return std::runtime_error(
            fmt::format("line {}, graph {}: {}", line_no, graph_no, what));
    };
    if (!jg.contains("nodes") || !jg["nodes"].is_array() || jg["nodes"].empty()) {
        throw fail("missing or empty 'nodes' array");
    }
    const auto& jnodes = jg["nodes"];
    const std::size_t dim = jnodes[0].size();
    if (dim == 0) throw fail("node feature vectors must be non-empty");
    std::vector<double> feats;
    feats.reserve(jnodes.size() * dim);
    for (const auto& jn : jnodes) {
        if (!jn.is_array() || jn.size() != dim) {
            throw fail(fmt::format("inconsistent node feature dimension (expected {})", dim));
        }
        for (const auto& v : jn) feats.push_back(v.get<double>());
    }
    MolecularGraph g;
    g.node_features = Tensor::matrix(jnodes.size(), dim, std::move(feats));

    if (jg.contains("edges")) {
        int edge_no = 0;
        for (const auto& je : jg["edges"]) {
            if (!je.is_array() || je.size() < 2 || je.size() > 3) {
                throw fail(fmt::format("edge {} must be [u, v] or [u, v, [features]]", edge_no));
            }
            const int u = je[0].get<int>();
            const int v = je[1].get<int>();
            g.edges.push_back({u, v});
            std::vector<double> ef;
            if (je.size() == 3) {
                for (const auto& x : je[2]) ef.push_back(x.get<double>());
            }
            g.edge_features.push_back(std::move(ef));
            ++edge_no;
        }
    }
    try {
        g.validate();
    } catch (const std::exception& e) {
        throw fail(e.what());
    }
    return g;
}

}  // namespace

std::vector<Task> load_tasks(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(fmt::format("cannot open task file '{}'", path));

    std::vector<Task> tasks;
    std::string line;
    int line_no = 0;
    int feature_dim = -1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json jt;
        try {
            jt = json::parse(line);
        } catch (const json::parse_error& e) {
            throw std::runtime_error(fmt::format("line {}: JSON parse error: {}", line_no, e.what()));
        }
        Task task;
        task.task_id = jt.value("task_id", fmt::format("task-{}", line_no));
        if (!jt.contains("graphs") || !jt["graphs"].is_array()) {
            throw std::runtime_error(fmt::format("line {}: missing 'graphs' array", line_no));
        }
        int graph_no = 0;
        for (const auto& jg : jt["graphs"]) {
            LabeledGraph lg;
            lg.graph = parse_graph(jg, line_no, graph_no);
            const int label = jg.value("label", -1);
            if (label != 0 && label != 1) {
                throw std::runtime_error(
                    fmt::format("line {}, graph {}: label must be 0 or 1", line_no, graph_no));
            }
            lg.label = label;
            if (feature_dim < 0) feature_dim = lg.graph.feature_dim();
            if (lg.graph.feature_dim() != feature_dim) {
                throw std::runtime_error(fmt::format(
                    "line {}, graph {}: node feature dim {} differs from {} seen earlier in the file",
                    line_no, graph_no, lg.graph.feature_dim(), feature_dim));
            }
            task.pool.push_back(std::move(lg));
            ++graph_no;
        }
        tasks.push_back(std::move(task));
    }
    return tasks;
}

void save_tasks(const std::vector<Task>& tasks, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error(fmt::format("cannot write task file '{}'", path));
    for (const Task& t : tasks) {
        json jt;
        jt["task_id"] = t.task_id;
        json jgraphs = json::array();
        for (const LabeledGraph& lg : t.pool) {
            json jg;
            json jnodes = json::array();
            const Tensor& f = lg.graph.node_features;
            for (std::size_t i = 0; i < f.rows(); ++i) {
                json jrow = json::array();
                for (std::size_t j = 0; j < f.cols(); ++j) jrow.push_back(f.at(i, j));
                jnodes.push_back(std::move(jrow));
            }
            jg["nodes"] = std::move(jnodes);
            json jedges = json::array();
            for (std::size_t e = 0; e < lg.graph.edges.size(); ++e) {
                json je = json::array();
                je.push_back(lg.graph.edges[e][0]);
                je.push_back(lg.graph.edges[e][1]);
                je.push_back(lg.graph.edge_features.empty() ? json::array()
                                                            : json(lg.graph.edge_features[e]));
                jedges.push_back(std::move(je));
            }
            jg["edges"] = std::move(jedges);
            jg["label"] = lg.label;
            jgraphs.push_back(std::move(jg));
        }
        jt["graphs"] = std::move(jgraphs);
        out << jt.dump() << "\n";
    }
}

}  // namespace pacia
