// Command-line front end: episodic training, evaluation, the ablation grid,
// synthetic data generation and diagnostics.

#include <fmt/format.h>

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "pacia/checkpoint.hpp"
#include "pacia/config.hpp"
#include "pacia/meta.hpp"
#include "pacia/synthetic.hpp"
#include "pacia/task_io.hpp"

namespace fs = std::filesystem;
using namespace pacia;

namespace {

struct CliOverrides {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> episodes;
    std::optional<int> k_shot;
    std::optional<int> support_size;
    std::optional<int> query_size;
    std::optional<double> lr;
    std::optional<std::string> ablation;
    std::optional<std::string> encoder_mod;
    std::optional<std::string> predictor_mod;
    std::optional<std::string> metric;
    std::optional<std::string> out;
    std::optional<std::string> ckpt;
};

void add_common_flags(CLI::App* cmd, CliOverrides& o) {
    cmd->add_option("--config", o.config_path, "JSON run configuration");
    cmd->add_option("--seed", o.seed, "RNG seed");
    cmd->add_option("--episodes", o.episodes, "training episode budget");
    cmd->add_option("--k-shot", o.k_shot, "balanced support size per class");
    cmd->add_option("--support-size", o.support_size, "total support size (sized mode)");
    cmd->add_option("--query-size", o.query_size, "query set size");
    cmd->add_option("--lr", o.lr, "Adam learning rate");
    cmd->add_option("--ablation", o.ablation, "none|finetune|no-task|no-query");
    cmd->add_option("--encoder-mod", o.encoder_mod, "N|D|ND|off");
    cmd->add_option("--predictor-mod", o.predictor_mod, "N|D|ND|off");
    cmd->add_option("--metric", o.metric, "roc-auc|delta-auprc");
    cmd->add_option("--out", o.out, "output directory (or file for gen-data)");
    cmd->add_option("--ckpt", o.ckpt, "checkpoint path");
}

RunConfig resolve_config(const CliOverrides& o) {
    RunConfig cfg;
    if (!o.config_path.empty()) cfg = load_run_config(o.config_path);
    // CLI flags override file values
    if (o.seed) cfg.train.seed = *o.seed;
    if (o.episodes) cfg.train.episodes_max = *o.episodes;
    if (o.k_shot) {
        cfg.train.k_shot = *o.k_shot;
        cfg.train.support_mode = SupportMode::kBalanced;
    }
    if (o.support_size) {
        cfg.train.support_size = *o.support_size;
        cfg.train.support_mode = SupportMode::kSized;
    }
    if (o.query_size) cfg.train.query_size = *o.query_size;
    if (o.lr) cfg.train.lr = *o.lr;
    if (o.ablation) {
        const Ablation preset = ablation_preset(*o.ablation);
        cfg.train.ablation.task_adapt = preset.task_adapt;
        cfg.train.ablation.query_adapt = preset.query_adapt;
        cfg.train.ablation.finetune = preset.finetune;
    }
    if (o.encoder_mod) cfg.train.ablation.encoder_mod = mod_mode_from_string(*o.encoder_mod);
    if (o.predictor_mod) cfg.train.ablation.predictor_mod = mod_mode_from_string(*o.predictor_mod);
    if (o.metric) cfg.metric = metric_from_string(*o.metric);
    if (o.out) cfg.out_dir = *o.out;
    if (o.ckpt) cfg.ckpt_path = *o.ckpt;
    return cfg;
}

void require_valid(const RunConfig& cfg) {
    const std::vector<std::string> errs = cfg.validate();
    if (!errs.empty()) {
        std::string joined;
        for (std::size_t i = 0; i < errs.size(); ++i) {
            if (i) joined += "; ";
            joined += errs[i];
        }
        throw std::runtime_error(fmt::format("invalid configuration: {}", joined));
    }
}

struct DataSet {
    std::vector<Task> train;
    std::vector<Task> valid;
    std::vector<Task> test;
};

DataSet load_data(const RunConfig& cfg) {
    DataSet d;
    if (cfg.synthetic.has_value()) {
        const int total = cfg.synthetic_train_tasks + cfg.synthetic_test_tasks;
        std::vector<Task> all =
            generate_tasks(cfg.train.seed, total, cfg.synthetic_graphs_per_task, *cfg.synthetic);
        d.train.assign(all.begin(), all.begin() + cfg.synthetic_train_tasks);
        d.test.assign(all.begin() + cfg.synthetic_train_tasks, all.end());
    } else {
        if (!cfg.train_path.empty()) d.train = load_tasks(cfg.train_path);
        if (!cfg.valid_path.empty()) d.valid = load_tasks(cfg.valid_path);
        if (!cfg.test_path.empty()) d.test = load_tasks(cfg.test_path);
    }
    return d;
}

int data_feature_dim(const DataSet& d) {
    for (const std::vector<Task>* ts : {&d.train, &d.valid, &d.test}) {
        for (const Task& t : *ts) {
            if (!t.pool.empty()) return t.pool.front().graph.feature_dim();
        }
    }
    return 0;
}

void write_manifest(const RunConfig& cfg, const std::string& command) {
    if (cfg.out_dir.empty()) return;
    fs::create_directories(cfg.out_dir);
    nlohmann::json j;
    j["format"] = "pacia-manifest-v1";
    j["command"] = command;
    j["seed"] = cfg.train.seed;
    j["ckpt_format"] = kCheckpointFormat;
    j["config"] = run_config_to_json(cfg);
    std::ofstream out(fs::path(cfg.out_dir) / "manifest.json");
    out << j.dump(2) << "\n";
}

void write_train_log(const RunConfig& cfg, const TrainResult& tr) {
    if (cfg.out_dir.empty()) return;
    std::ofstream log(fs::path(cfg.out_dir) / "train_log.csv");
    log << "episode,task,loss\n";
    for (const TrainLogRow& r : tr.log) {
        log << r.episode << "," << r.task_id << "," << fmt::format("{:.17g}", r.loss) << "\n";
    }
    if (!tr.validation.empty()) {
        std::ofstream val(fs::path(cfg.out_dir) / "validation.csv");
        val << "episode,metric\n";
        for (const auto& [ep, m] : tr.validation) {
            val << ep << "," << fmt::format("{:.17g}", m) << "\n";
        }
    }
}

void write_eval_csv(const RunConfig& cfg, const std::vector<Task>& tasks, const EvalReport& rep,
                    const std::string& name) {
    if (cfg.out_dir.empty()) return;
    fs::create_directories(cfg.out_dir);
    std::ofstream out(fs::path(cfg.out_dir) / name);
    out << "task,metric\n";
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        out << tasks[i].task_id << "," << fmt::format("{:.17g}", rep.per_task[i]) << "\n";
    }
    out << "mean," << fmt::format("{:.17g}", rep.mean) << "\n";
}

std::string default_ckpt(const RunConfig& cfg) {
    if (!cfg.ckpt_path.empty()) return cfg.ckpt_path;
    if (!cfg.out_dir.empty()) return (fs::path(cfg.out_dir) / "model.ckpt.json").string();
    return "model.ckpt.json";
}

Model build_for_data(RunConfig& cfg, const DataSet& d) {
    const int dim = data_feature_dim(d);
    if (dim > 0) cfg.model.d_in = dim;
    return build_model(cfg.model, cfg.train.seed);
}

int cmd_train(RunConfig cfg) {
    require_valid(cfg);
    DataSet data = load_data(cfg);
    Model model = build_for_data(cfg, data);
    write_manifest(cfg, "train");
    TrainResult tr =
        train(model, data.train, data.valid.empty() ? nullptr : &data.valid, cfg.train);
    write_train_log(cfg, tr);
    save_checkpoint(model, cfg.train.seed, default_ckpt(cfg));
    double last = tr.log.empty() ? 0.0 : tr.log.back().loss;
    fmt::print("trained {} episodes, final loss {:.4f}, checkpoint: {}\n", tr.log.size(), last,
               default_ckpt(cfg));
    if (!data.test.empty()) {
        EvalReport rep = evaluate(model, data.test, cfg.train, cfg.eval_episodes_per_task,
                                  cfg.metric);
        write_eval_csv(cfg, data.test, rep, "eval.csv");
        fmt::print("test {} = {:.6f} over {} tasks\n", to_string(cfg.metric), rep.mean,
                   rep.per_task.size());
    }
    return 0;
}

int cmd_eval(RunConfig cfg, bool adapted) {
    require_valid(cfg);
    DataSet data = load_data(cfg);
    if (data.test.empty()) throw std::runtime_error("eval: no test tasks configured");
    LoadedCheckpoint loaded = load_checkpoint(default_ckpt(cfg));
    write_manifest(cfg, adapted ? "maml-eval" : "eval");
    EvalReport rep =
        adapted ? evaluate_adapted(loaded.model, data.test, cfg.train, cfg.eval_episodes_per_task,
                                   cfg.metric)
                : evaluate(loaded.model, data.test, cfg.train, cfg.eval_episodes_per_task,
                           cfg.metric);
    write_eval_csv(cfg, data.test, rep, "eval.csv");
    for (std::size_t i = 0; i < data.test.size(); ++i) {
        fmt::print("{}: {:.6f}\n", data.test[i].task_id, rep.per_task[i]);
    }
    fmt::print("mean {} = {:.17g} ({} skipped single-class episodes)\n", to_string(cfg.metric),
               rep.mean, rep.skipped_episodes);
    return 0;
}

int cmd_maml_train(RunConfig cfg) {
    require_valid(cfg);
    DataSet data = load_data(cfg);
    Model model = build_for_data(cfg, data);
    // the MAML baseline trains the main network without hypernetworks
    cfg.train.ablation.task_adapt = false;
    cfg.train.ablation.query_adapt = false;
    write_manifest(cfg, "maml-train");
    MamlTrainResult tr = maml_train(model, data.train, cfg.train);
    if (!cfg.out_dir.empty()) {
        std::ofstream log(fs::path(cfg.out_dir) / "train_log.csv");
        log << "episode,task,loss,support_before,support_after\n";
        for (std::size_t i = 0; i < tr.log.size(); ++i) {
            log << tr.log[i].episode << "," << tr.log[i].task_id << ","
                << fmt::format("{:.17g}", tr.log[i].loss) << ","
                << fmt::format("{:.17g}", tr.support_loss_before_after[i].first) << ","
                << fmt::format("{:.17g}", tr.support_loss_before_after[i].second) << "\n";
        }
    }
    save_checkpoint(model, cfg.train.seed, default_ckpt(cfg));
    fmt::print("maml-trained {} episodes, checkpoint: {}\n", tr.log.size(), default_ckpt(cfg));
    return 0;
}

int cmd_gen_data(RunConfig cfg, std::uint64_t seed, int n_tasks, int graphs_per_task,
                 const std::string& out_file) {
    SyntheticSpec spec = cfg.synthetic.value_or(SyntheticSpec{});
    std::vector<Task> tasks = generate_tasks(seed, n_tasks, graphs_per_task, spec);
    save_tasks(tasks, out_file);
    fmt::print("wrote {} tasks ({} graphs each) to {}\n", tasks.size(), graphs_per_task, out_file);
    return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
    PipelineGradCheck pg = pipeline_gradcheck(seed);
    std::cout << pg.report.summary();
    fmt::print("elapsed {:.2f}s\n", pg.seconds);
    if (!pg.report.pass(1e-4)) {
        throw std::runtime_error(
            fmt::format("gradcheck failed: max relative error {:.3e}", pg.report.max_rel_err));
    }
    fmt::print("gradcheck passed (tol 1e-4)\n");
    return 0;
}

int cmd_dump_embeddings(RunConfig cfg, const std::string& stage_name) {
    require_valid(cfg);
    DataSet data = load_data(cfg);
    const std::vector<Task>& pool = !data.test.empty() ? data.test : data.train;
    if (pool.empty()) throw std::runtime_error("dump-embeddings: no tasks configured");
    LoadedCheckpoint loaded = load_checkpoint(default_ckpt(cfg));
    RngStream rng(derive_seed(cfg.train.seed, 0x64756d70ULL));
    const int arg = cfg.train.support_mode == SupportMode::kBalanced ? cfg.train.k_shot
                                                                     : cfg.train.support_size;
    Episode ep = sample_episode(pool.front(), cfg.train.support_mode, arg, cfg.train.query_size, rng);
    const DumpStage stage = dump_stage_from_string(stage_name);
    std::vector<EmbeddingRow> rows = dump_embeddings(loaded.model, ep, stage, cfg.train);

    fs::path out_path = cfg.out_dir.empty() ? fs::path("embeddings.tsv")
                                            : fs::path(cfg.out_dir) / "embeddings.tsv";
    if (!cfg.out_dir.empty()) fs::create_directories(cfg.out_dir);
    std::ofstream out(out_path);
    out << "molecule\tlabel\tvector\n";
    for (const EmbeddingRow& r : rows) {
        out << r.molecule_id << "\t" << r.label << "\t";
        for (std::size_t i = 0; i < r.vec.size(); ++i) {
            if (i) out << ",";
            out << fmt::format("{:.17g}", r.vec[i]);
        }
        out << "\n";
    }
    fmt::print("wrote {} embedding rows ({}) to {}\n", rows.size(), stage_name, out_path.string());
    return 0;
}

int cmd_ablate(RunConfig cfg) {
    require_valid(cfg);
    DataSet data = load_data(cfg);
    if (data.train.empty() || data.test.empty()) {
        throw std::runtime_error("ablate: needs train and test tasks");
    }
    write_manifest(cfg, "ablate");

    struct Row {
        std::string name;
        Ablation ablation;
        bool adapted_eval = false;
    };
    std::vector<Row> rows;
    for (const ModMode em : {ModMode::kN, ModMode::kD, ModMode::kND}) {
        for (const ModMode pm : {ModMode::kN, ModMode::kD, ModMode::kND}) {
            Ablation a;
            a.encoder_mod = em;
            a.predictor_mod = pm;
            rows.push_back({fmt::format("enc={} pred={}", to_string(em), to_string(pm)), a, false});
        }
    }
    rows.push_back({"fine-tuning", ablation_preset("finetune"), true});
    rows.push_back({"w/o T", ablation_preset("no-task"), false});
    rows.push_back({"w/o Q", ablation_preset("no-query"), false});

    fmt::print("{:<20} {:>10}\n", "variant", to_string(cfg.metric));
    std::vector<std::pair<std::string, double>> table;
    for (const Row& r : rows) {
        RunConfig rc = cfg;
        rc.train.ablation = r.ablation;
        Model model = build_for_data(rc, data);
        train(model, data.train, nullptr, rc.train);
        EvalReport rep = r.adapted_eval
                             ? evaluate_adapted(model, data.test, rc.train,
                                                cfg.eval_episodes_per_task, cfg.metric)
                             : evaluate(model, data.test, rc.train, cfg.eval_episodes_per_task,
                                        cfg.metric);
        table.emplace_back(r.name, rep.mean);
        fmt::print("{:<20} {:>10.6f}\n", r.name, rep.mean);
    }
    if (!cfg.out_dir.empty()) {
        std::ofstream out(fs::path(cfg.out_dir) / "ablation.csv");
        out << "variant,metric\n";
        for (const auto& [name, m] : table) out << name << "," << fmt::format("{:.17g}", m) << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"few-shot graph property prediction with hypernetwork-adapted GNNs"};
    app.require_subcommand(1);

    CliOverrides o;
    std::uint64_t gen_seed = 0;
    int gen_tasks = 20;
    int gen_graphs = 64;
    std::string stage = "post_refine";

    CLI::App* c_train = app.add_subcommand("train", "episodic meta-training");
    CLI::App* c_eval = app.add_subcommand("eval", "evaluate a checkpoint on test tasks");
    CLI::App* c_ablate = app.add_subcommand("ablate", "run the ablation grid");
    CLI::App* c_gen = app.add_subcommand("gen-data", "generate synthetic tasks to a JSONL file");
    CLI::App* c_grad = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    CLI::App* c_dump = app.add_subcommand("dump-embeddings", "export molecular embeddings");
    CLI::App* c_mtrain = app.add_subcommand("maml-train", "train the MAML baseline");
    CLI::App* c_meval = app.add_subcommand("maml-eval", "evaluate with per-episode adaptation");

    for (CLI::App* c : {c_train, c_eval, c_ablate, c_gen, c_grad, c_dump, c_mtrain, c_meval}) {
        add_common_flags(c, o);
    }
    c_gen->add_option("--tasks", gen_tasks, "number of tasks");
    c_gen->add_option("--graphs-per-task", gen_graphs, "pool size per task");
    c_dump->add_option("--stage", stage, "pre|post_task_adapt|post_refine");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(c_grad)) return cmd_gradcheck(o.seed.value_or(1));
        RunConfig cfg = resolve_config(o);
        if (app.got_subcommand(c_gen)) {
            gen_seed = o.seed.value_or(0);
            if (!o.out || o.out->empty()) throw std::runtime_error("gen-data: --out FILE required");
            if (!cfg.synthetic.has_value()) cfg.synthetic = SyntheticSpec{};
            return cmd_gen_data(cfg, gen_seed, gen_tasks, gen_graphs, *o.out);
        }
        if (app.got_subcommand(c_train)) return cmd_train(std::move(cfg));
        if (app.got_subcommand(c_eval)) return cmd_eval(std::move(cfg), false);
        if (app.got_subcommand(c_meval)) return cmd_eval(std::move(cfg), true);
        if (app.got_subcommand(c_mtrain)) return cmd_maml_train(std::move(cfg));
        if (app.got_subcommand(c_ablate)) return cmd_ablate(std::move(cfg));
        if (app.got_subcommand(c_dump)) return cmd_dump_embeddings(std::move(cfg), stage);
        throw std::runtime_error("no subcommand");
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
