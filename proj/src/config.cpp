#include "pacia/config.hpp"

#include <fmt/format.h>

#include <fstream>

namespace pacia {

using nlohmann::json;

json model_config_to_json(const ModelConfig& cfg) {
    return json{{"d_in", cfg.d_in},
                {"enc_layers", cfg.enc_layers},
                {"enc_hidden", cfg.enc_hidden},
                {"enc_emb", cfg.enc_emb},
                {"enc_out", cfg.enc_out},
                {"rel_layers", cfg.rel_layers},
                {"rel_adj_hidden", cfg.rel_adj_hidden},
                {"rel_adj_mid", cfg.rel_adj_mid},
                {"rel_upd_hidden", cfg.rel_upd_hidden},
                {"proto_dim", cfg.proto_dim},
                {"enc_dropout", cfg.enc_dropout},
                {"hyper_dropout", cfg.hyper_dropout},
                {"film_residual_scale", cfg.film_residual_scale},
                {"proto_order", cfg.proto_order == ProtoOrder::kEquation ? "equation" : "table"},
                {"adjacency_squash", cfg.adjacency_sigmoid ? "sigmoid" : "none"},
                {"adjacency_input", cfg.adjacency_exp_input ? "exp_absdiff" : "absdiff"}};
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig cfg;
    cfg.d_in = j.value("d_in", cfg.d_in);
    cfg.enc_layers = j.value("enc_layers", cfg.enc_layers);
    cfg.enc_hidden = j.value("enc_hidden", cfg.enc_hidden);
    cfg.enc_emb = j.value("enc_emb", cfg.enc_emb);
    cfg.enc_out = j.value("enc_out", cfg.enc_out);
    cfg.rel_layers = j.value("rel_layers", cfg.rel_layers);
    cfg.rel_adj_hidden = j.value("rel_adj_hidden", cfg.rel_adj_hidden);
    cfg.rel_adj_mid = j.value("rel_adj_mid", cfg.rel_adj_mid);
    cfg.rel_upd_hidden = j.value("rel_upd_hidden", cfg.rel_upd_hidden);
    cfg.proto_dim = j.value("proto_dim", cfg.proto_dim);
    cfg.enc_dropout = j.value("enc_dropout", cfg.enc_dropout);
    cfg.hyper_dropout = j.value("hyper_dropout", cfg.hyper_dropout);
    cfg.film_residual_scale = j.value("film_residual_scale", cfg.film_residual_scale);
    const std::string order = j.value("proto_order", "equation");
    if (order != "equation" && order != "table") {
        throw std::runtime_error(fmt::format("proto_order must be 'equation' or 'table', got '{}'", order));
    }
    cfg.proto_order = order == "equation" ? ProtoOrder::kEquation : ProtoOrder::kTable;
    const std::string squash = j.value("adjacency_squash", "sigmoid");
    if (squash != "sigmoid" && squash != "none") {
        throw std::runtime_error(
            fmt::format("adjacency_squash must be 'sigmoid' or 'none', got '{}'", squash));
    }
    cfg.adjacency_sigmoid = squash == "sigmoid";
    const std::string adj_in = j.value("adjacency_input", "absdiff");
    if (adj_in != "absdiff" && adj_in != "exp_absdiff") {
        throw std::runtime_error(
            fmt::format("adjacency_input must be 'absdiff' or 'exp_absdiff', got '{}'", adj_in));
    }
    cfg.adjacency_exp_input = adj_in == "exp_absdiff";
    return cfg;
}

json ablation_to_json(const Ablation& a) {
    return json{{"task_adapt", a.task_adapt},
                {"query_adapt", a.query_adapt},
                {"encoder_mod", to_string(a.encoder_mod)},
                {"predictor_mod", to_string(a.predictor_mod)},
                {"finetune", a.finetune}};
}

Ablation ablation_from_json(const json& j) {
    Ablation a;
    a.task_adapt = j.value("task_adapt", a.task_adapt);
    a.query_adapt = j.value("query_adapt", a.query_adapt);
    a.encoder_mod = mod_mode_from_string(j.value("encoder_mod", "ND"));
    a.predictor_mod = mod_mode_from_string(j.value("predictor_mod", "ND"));
    a.finetune = j.value("finetune", a.finetune);
    return a;
}

json train_config_to_json(const TrainConfig& cfg) {
    return json{{"lr", cfg.lr},
                {"episodes_max", cfg.episodes_max},
                {"query_size", cfg.query_size},
                {"support_mode", cfg.support_mode == SupportMode::kBalanced ? "balanced" : "sized"},
                {"k_shot", cfg.k_shot},
                {"support_size", cfg.support_size},
                {"ablation", ablation_to_json(cfg.ablation)},
                {"seed", cfg.seed},
                {"eval_every", cfg.eval_every},
                {"eval_episodes_per_task", cfg.eval_episodes_per_task},
                {"eval_metric", to_string(cfg.eval_metric)},
                {"task_batch", cfg.task_batch},
                {"inner_lr", cfg.inner_lr},
                {"inner_steps", cfg.inner_steps},
                {"dropout_enabled", cfg.dropout_enabled}};
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig cfg;
    cfg.lr = j.value("lr", cfg.lr);
    cfg.episodes_max = j.value("episodes_max", cfg.episodes_max);
    cfg.query_size = j.value("query_size", cfg.query_size);
    const std::string mode = j.value("support_mode", "balanced");
    if (mode != "balanced" && mode != "sized") {
        throw std::runtime_error(
            fmt::format("support_mode must be 'balanced' or 'sized', got '{}'", mode));
    }
    cfg.support_mode = mode == "balanced" ? SupportMode::kBalanced : SupportMode::kSized;
    cfg.k_shot = j.value("k_shot", cfg.k_shot);
    cfg.support_size = j.value("support_size", cfg.support_size);
    if (j.contains("ablation")) cfg.ablation = ablation_from_json(j["ablation"]);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.eval_every = j.value("eval_every", cfg.eval_every);
    cfg.eval_episodes_per_task = j.value("eval_episodes_per_task", cfg.eval_episodes_per_task);
    cfg.eval_metric = metric_from_string(j.value("eval_metric", "roc-auc"));
    cfg.task_batch = j.value("task_batch", cfg.task_batch);
    cfg.inner_lr = j.value("inner_lr", cfg.inner_lr);
    cfg.inner_steps = j.value("inner_steps", cfg.inner_steps);
    cfg.dropout_enabled = j.value("dropout_enabled", cfg.dropout_enabled);
    return cfg;
}

json synthetic_spec_to_json(const SyntheticSpec& s) {
    return json{{"feature_dim", s.feature_dim},   {"min_nodes", s.min_nodes},
                {"max_nodes", s.max_nodes},       {"node_types", s.node_types},
                {"noise", s.noise},               {"extra_edge_prob", s.extra_edge_prob},
                {"max_attempts", s.max_attempts}, {"balance_lo", s.balance_lo},
                {"balance_hi", s.balance_hi}};
}

SyntheticSpec synthetic_spec_from_json(const json& j) {
    SyntheticSpec s;
    s.feature_dim = j.value("feature_dim", s.feature_dim);
    s.min_nodes = j.value("min_nodes", s.min_nodes);
    s.max_nodes = j.value("max_nodes", s.max_nodes);
    s.node_types = j.value("node_types", s.node_types);
    s.noise = j.value("noise", s.noise);
    s.extra_edge_prob = j.value("extra_edge_prob", s.extra_edge_prob);
    s.max_attempts = j.value("max_attempts", s.max_attempts);
    s.balance_lo = j.value("balance_lo", s.balance_lo);
    s.balance_hi = j.value("balance_hi", s.balance_hi);
    return s;
}

std::vector<std::string> RunConfig::validate() const {
    std::vector<std::string> errs;
    const bool has_files = !train_path.empty() || !test_path.empty();
    if (has_files && synthetic.has_value()) {
        errs.push_back("exactly one data source allowed: task files XOR a synthetic spec");
    }
    if (!has_files && !synthetic.has_value()) {
        errs.push_back("no data source: provide task file paths or a synthetic spec");
    }
    for (const std::string* p : {&train_path, &valid_path, &test_path}) {
        if (!p->empty() && !std::ifstream(*p)) {
            errs.push_back(fmt::format("task file not readable: '{}'", *p));
        }
    }
    if (model.d_in <= 0) errs.push_back("model.d_in must be positive");
    if (model.enc_layers < 1) errs.push_back("model.enc_layers must be >= 1");
    if (model.rel_layers < 1) errs.push_back("model.rel_layers must be >= 1");
    if (model.enc_dropout < 0.0 || model.enc_dropout >= 1.0) {
        errs.push_back("model.enc_dropout must be in [0, 1)");
    }
    if (model.hyper_dropout < 0.0 || model.hyper_dropout >= 1.0) {
        errs.push_back("model.hyper_dropout must be in [0, 1)");
    }
    if (train.lr <= 0.0) errs.push_back("train.lr must be positive");
    if (train.episodes_max < 0) errs.push_back("train.episodes_max must be >= 0");
    if (train.query_size < 1) errs.push_back("train.query_size must be >= 1");
    if (train.support_mode == SupportMode::kBalanced && train.k_shot < 1) {
        errs.push_back("train.k_shot must be >= 1 in balanced mode");
    }
    if (train.support_mode == SupportMode::kSized && train.support_size < 2) {
        errs.push_back("train.support_size must be >= 2 in sized mode");
    }
    if (train.task_batch < 1) errs.push_back("train.task_batch must be >= 1");
    if (train.inner_steps < 0) errs.push_back("train.inner_steps must be >= 0");
    if (eval_episodes_per_task < 1) errs.push_back("eval_episodes_per_task must be >= 1");
    if (synthetic.has_value()) {
        if (synthetic_train_tasks < 0 || synthetic_test_tasks < 0) {
            errs.push_back("synthetic task counts must be >= 0");
        }
        if (synthetic_graphs_per_task < 4 || synthetic_graphs_per_task % 2 != 0) {
            errs.push_back("synthetic_graphs_per_task must be even and >= 4");
        }
    }
    return errs;
}

json run_config_to_json(const RunConfig& cfg) {
    json j;
    json data;
    if (cfg.synthetic.has_value()) {
        data["synthetic"] = synthetic_spec_to_json(*cfg.synthetic);
        data["synthetic_train_tasks"] = cfg.synthetic_train_tasks;
        data["synthetic_test_tasks"] = cfg.synthetic_test_tasks;
        data["synthetic_graphs_per_task"] = cfg.synthetic_graphs_per_task;
    } else {
        data["train"] = cfg.train_path;
        data["valid"] = cfg.valid_path;
        data["test"] = cfg.test_path;
    }
    j["data"] = std::move(data);
    j["model"] = model_config_to_json(cfg.model);
    j["train"] = train_config_to_json(cfg.train);
    j["metric"] = to_string(cfg.metric);
    j["eval_episodes_per_task"] = cfg.eval_episodes_per_task;
    j["out"] = cfg.out_dir;
    j["ckpt"] = cfg.ckpt_path;
    return j;
}

RunConfig run_config_from_json(const json& j) {
    RunConfig cfg;
    if (j.contains("data")) {
        const json& d = j["data"];
        cfg.train_path = d.value("train", "");
        cfg.valid_path = d.value("valid", "");
        cfg.test_path = d.value("test", "");
        if (d.contains("synthetic")) {
            cfg.synthetic = synthetic_spec_from_json(d["synthetic"]);
            cfg.synthetic_train_tasks = d.value("synthetic_train_tasks", cfg.synthetic_train_tasks);
            cfg.synthetic_test_tasks = d.value("synthetic_test_tasks", cfg.synthetic_test_tasks);
            cfg.synthetic_graphs_per_task =
                d.value("synthetic_graphs_per_task", cfg.synthetic_graphs_per_task);
        }
    }
    if (j.contains("model")) cfg.model = model_config_from_json(j["model"]);
    if (j.contains("train")) cfg.train = train_config_from_json(j["train"]);
    cfg.metric = metric_from_string(j.value("metric", "roc-auc"));
    cfg.eval_episodes_per_task = j.value("eval_episodes_per_task", cfg.eval_episodes_per_task);
    cfg.out_dir = j.value("out", "");
    cfg.ckpt_path = j.value("ckpt", "");
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(fmt::format("cannot open config file '{}'", path));
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error(fmt::format("config '{}': {}", path, e.what()));
    }
    return run_config_from_json(j);
}

Ablation ablation_preset(const std::string& name) {
    Ablation a;
    if (name == "none") return a;
    if (name == "finetune") {
        a.task_adapt = false;
        a.query_adapt = false;
        a.finetune = true;
        return a;
    }
    if (name == "no-task") {
        a.task_adapt = false;
        return a;
    }
    if (name == "no-query") {
        a.query_adapt = false;
        return a;
    }
    throw std::runtime_error(fmt::format(
        "unknown ablation preset '{}' (want none, finetune, no-task or no-query)", name));
}

}  // namespace pacia
