#include "pacia/meta.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <thread>

#include "pacia/synthetic.hpp"

namespace pacia {

Metric metric_from_string(const std::string& s) {
    if (s == "roc-auc" || s == "roc_auc") return Metric::kRocAuc;
    if (s == "delta-auprc" || s == "delta_auprc") return Metric::kDeltaAuprc;
    throw std::runtime_error(fmt::format("unknown metric '{}' (want roc-auc or delta-auprc)", s));
}

std::string to_string(Metric m) {
    return m == Metric::kRocAuc ? "roc-auc" : "delta-auprc";
}

double episode_metric(const EpisodeResult& r, Metric metric) {
    ScoredSet s{r.active_scores(), r.labels};
    return metric == Metric::kRocAuc ? roc_auc(s) : delta_auprc(s);
}

double episode_nll(const std::vector<std::array<double, 2>>& probs,
                   const std::vector<int>& labels) {
    if (probs.size() != labels.size()) {
        throw std::runtime_error("episode_nll: predictions and labels differ in length");
    }
    double loss = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double p = probs[i][labels[i] == 1 ? 1 : 0];
        loss += -std::log(std::max(p, 1e-12));
    }
    return loss;
}

int default_worker_count(int n_tasks) {
    int n = static_cast<int>(std::thread::hardware_concurrency());
    if (n <= 0) n = 1;
    if (const char* env = std::getenv("PACIA_NUM_WORKERS")) {
        const int cap = std::atoi(env);
        if (cap > 0) n = std::min(n, cap);
    }
    return std::max(1, std::min(n, n_tasks));
}

namespace {

Episode sample_for(const Task& task, const TrainConfig& cfg, RngStream& rng) {
    const int arg = cfg.support_mode == SupportMode::kBalanced ? cfg.k_shot : cfg.support_size;
    return sample_episode(task, cfg.support_mode, arg, cfg.query_size, rng);
}

RunOptions train_opts(const TrainConfig& cfg, std::uint64_t episode_seed) {
    RunOptions o;
    o.mode = RunMode::kTrain;
    o.ablation = cfg.ablation;
    o.dropout_seed = episode_seed;
    o.dropout_enabled = cfg.dropout_enabled;
    return o;
}

RunOptions test_opts(const TrainConfig& cfg) {
    RunOptions o;
    o.mode = RunMode::kTest;
    o.ablation = cfg.ablation;
    return o;
}

[[noreturn]] void nan_abort(int episode, const std::string& task_id, const Tape& tape) {
    throw std::runtime_error(fmt::format(
        "training aborted: non-finite loss at episode {} (task '{}'), first non-finite tensor: {}",
        episode, task_id, tape.first_non_finite()));
}

}  // namespace

TrainResult train(Model& model, const std::vector<Task>& train_tasks,
                  const std::vector<Task>* valid_tasks, const TrainConfig& cfg) {
    if (train_tasks.empty()) throw std::runtime_error("train: no training tasks");
    TrainResult result;
    AdamOptimizer adam(cfg.lr);
    RngStream sampler(derive_seed(cfg.seed, 0x747261696eULL));

    const bool track_best = valid_tasks != nullptr && !valid_tasks->empty() && cfg.eval_every > 0;
    std::vector<Tensor> best_values;

    for (int episode = 0; episode < cfg.episodes_max; ++episode) {
        const Task& task = train_tasks[episode % train_tasks.size()];
        Episode ep = sample_for(task, cfg, sampler);

        if (episode % std::max(1, cfg.task_batch) == 0) model.params.zero_grads();
        Tape tape;
        ForwardOutput out = forward_episode(
            model, tape, ep, train_opts(cfg, derive_seed(cfg.seed, 0x64726f70ULL, episode)));
        if (!std::isfinite(out.result.loss)) nan_abort(episode, task.task_id, tape);
        tape.backward(out.loss);
        result.log.push_back({episode, task.task_id, out.result.loss});
        if ((episode + 1) % std::max(1, cfg.task_batch) == 0) adam.step(model.params);

        if (track_best && (episode + 1) % cfg.eval_every == 0) {
            EvalReport rep =
                evaluate(model, *valid_tasks, cfg, cfg.eval_episodes_per_task, cfg.eval_metric);
            result.validation.emplace_back(episode + 1, rep.mean);
            if (result.best_episode < 0 || rep.mean > result.best_metric) {
                result.best_episode = episode + 1;
                result.best_metric = rep.mean;
                best_values = model.params.snapshot_values();
            }
        }
    }
    if (track_best && !best_values.empty()) model.params.restore_values(best_values);
    return result;
}

EvalReport evaluate(Model& model, const std::vector<Task>& tasks, const TrainConfig& cfg,
                    int episodes_per_task, Metric metric, int n_workers) {
    EvalReport report;
    if (tasks.empty()) return report;
    if (n_workers <= 0) n_workers = default_worker_count(static_cast<int>(tasks.size()));

    struct TaskResult {
        std::vector<double> metrics;
        int skipped = 0;
        std::string error;
    };
    std::vector<TaskResult> per_task(tasks.size());

    auto run_task = [&](std::size_t ti) {
        TaskResult& tr = per_task[ti];
        try {
            for (int e = 0; e < episodes_per_task; ++e) {
                RngStream rng(derive_seed(cfg.seed, 0x6576616cULL,
                                          (static_cast<std::uint64_t>(ti) << 20) ^
                                              static_cast<std::uint64_t>(e)));
                Episode ep = sample_for(tasks[ti], cfg, rng);
                EpisodeResult r = run_episode(model, ep, test_opts(cfg));
                ScoredSet s{r.active_scores(), r.labels};
                if (!has_both_classes(s)) {
                    ++tr.skipped;
                    continue;
                }
                tr.metrics.push_back(metric == Metric::kRocAuc ? roc_auc(s) : delta_auprc(s));
            }
        } catch (const std::exception& ex) {
            tr.error = ex.what();
        }
    };

    if (n_workers <= 1) {
        for (std::size_t ti = 0; ti < tasks.size(); ++ti) run_task(ti);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < n_workers; ++w) {
            pool.emplace_back([&, w]() {
                for (std::size_t ti = static_cast<std::size_t>(w); ti < tasks.size();
                     ti += static_cast<std::size_t>(n_workers)) {
                    run_task(ti);
                }
            });
        }
        for (auto& t : pool) t.join();
    }

    double total = 0.0;
    int counted = 0;
    for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
        const TaskResult& tr = per_task[ti];
        if (!tr.error.empty()) {
            throw std::runtime_error(
                fmt::format("evaluate: task '{}' failed: {}", tasks[ti].task_id, tr.error));
        }
        report.skipped_episodes += tr.skipped;
        if (tr.metrics.empty()) {
            report.per_task.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        double m = 0.0;
        for (double v : tr.metrics) m += v;
        m /= static_cast<double>(tr.metrics.size());
        report.per_task.push_back(m);
        total += m;
        ++counted;
    }
    report.mean = counted > 0 ? total / counted : 0.0;
    return report;
}

MamlAdaptResult maml_adapt(Model& model, const Episode& episode, double inner_lr, int steps,
                           const RunOptions& opts) {
    MamlAdaptResult result;
    const std::vector<Tensor> base = model.params.snapshot_values();

    RunOptions inner = opts;
    inner.mode = RunMode::kTrain;
    inner.dropout_enabled = false;  // deterministic descent on the support loss

    for (int s = 0; s < steps; ++s) {
        model.params.zero_grads();
        Tape tape;
        ForwardOutput out = forward_support(model, tape, episode, inner);
        result.support_losses.push_back(out.result.loss);
        tape.backward(out.loss);
        sgd_step(model.params, inner_lr);
    }
    {
        Tape tape;
        ForwardOutput out = forward_support(model, tape, episode, inner);
        result.support_losses.push_back(out.result.loss);
    }
    result.adapted_values = model.params.snapshot_values();
    model.params.restore_values(base);
    return result;
}

MamlTrainResult maml_train(Model& model, const std::vector<Task>& train_tasks,
                           const TrainConfig& cfg) {
    if (train_tasks.empty()) throw std::runtime_error("maml_train: no training tasks");
    MamlTrainResult result;
    AdamOptimizer adam(cfg.lr);
    RngStream sampler(derive_seed(cfg.seed, 0x6d616d6cULL));

    for (int episode = 0; episode < cfg.episodes_max; ++episode) {
        const Task& task = train_tasks[episode % train_tasks.size()];
        Episode ep = sample_for(task, cfg, sampler);

        const std::vector<Tensor> base = model.params.snapshot_values();
        RunOptions inner;
        inner.mode = RunMode::kTrain;
        inner.ablation = cfg.ablation;
        inner.dropout_enabled = false;
        double support_before = 0.0, support_after = 0.0;
        for (int s = 0; s < cfg.inner_steps; ++s) {
            model.params.zero_grads();
            Tape tape;
            ForwardOutput out = forward_support(model, tape, ep, inner);
            if (s == 0) support_before = out.result.loss;
            tape.backward(out.loss);
            sgd_step(model.params, cfg.inner_lr);
        }

        // outer first-order step: query-loss gradients at the adapted
        // parameters, applied to the base parameters
        model.params.zero_grads();
        Tape tape;
        ForwardOutput out = forward_episode(
            model, tape, ep, train_opts(cfg, derive_seed(cfg.seed, 0x64726f70ULL, episode)));
        if (!std::isfinite(out.result.loss)) nan_abort(episode, task.task_id, tape);
        tape.backward(out.loss);
        {
            Tape stape;
            support_after = forward_support(model, stape, ep, inner).result.loss;
        }
        model.params.restore_values(base);
        adam.step(model.params);

        result.log.push_back({episode, task.task_id, out.result.loss});
        result.support_loss_before_after.emplace_back(support_before, support_after);
    }
    return result;
}

EvalReport evaluate_adapted(const Model& model, const std::vector<Task>& tasks,
                            const TrainConfig& cfg, int episodes_per_task, Metric metric,
                            int n_workers) {
    EvalReport report;
    if (tasks.empty()) return report;
    if (n_workers <= 0) n_workers = default_worker_count(static_cast<int>(tasks.size()));

    struct TaskResult {
        std::vector<double> metrics;
        int skipped = 0;
        std::string error;
    };
    std::vector<TaskResult> per_task(tasks.size());

    auto run_task = [&](Model& local, std::size_t ti) {
        TaskResult& tr = per_task[ti];
        try {
            for (int e = 0; e < episodes_per_task; ++e) {
                RngStream rng(derive_seed(cfg.seed, 0x6576616cULL,
                                          (static_cast<std::uint64_t>(ti) << 20) ^
                                              static_cast<std::uint64_t>(e)));
                Episode ep = sample_for(tasks[ti], cfg, rng);
                RunOptions opts = test_opts(cfg);
                MamlAdaptResult adapt = maml_adapt(local, ep, cfg.inner_lr, cfg.inner_steps, opts);
                const std::vector<Tensor> base = local.params.snapshot_values();
                local.params.restore_values(adapt.adapted_values);
                EpisodeResult r = run_episode(local, ep, opts);
                local.params.restore_values(base);
                ScoredSet s{r.active_scores(), r.labels};
                if (!has_both_classes(s)) {
                    ++tr.skipped;
                    continue;
                }
                tr.metrics.push_back(metric == Metric::kRocAuc ? roc_auc(s) : delta_auprc(s));
            }
        } catch (const std::exception& ex) {
            tr.error = ex.what();
        }
    };

    if (n_workers <= 1) {
        Model local = model;
        for (std::size_t ti = 0; ti < tasks.size(); ++ti) run_task(local, ti);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < n_workers; ++w) {
            pool.emplace_back([&, w]() {
                Model local = model;
                for (std::size_t ti = static_cast<std::size_t>(w); ti < tasks.size();
                     ti += static_cast<std::size_t>(n_workers)) {
                    run_task(local, ti);
                }
            });
        }
        for (auto& t : pool) t.join();
    }

    double total = 0.0;
    int counted = 0;
    for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
        const TaskResult& tr = per_task[ti];
        if (!tr.error.empty()) {
            throw std::runtime_error(
                fmt::format("evaluate_adapted: task '{}' failed: {}", tasks[ti].task_id, tr.error));
        }
        report.skipped_episodes += tr.skipped;
        if (tr.metrics.empty()) {
            report.per_task.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        double m = 0.0;
        for (double v : tr.metrics) m += v;
        m /= static_cast<double>(tr.metrics.size());
        report.per_task.push_back(m);
        total += m;
        ++counted;
    }
    report.mean = counted > 0 ? total / counted : 0.0;
    return report;
}

PipelineGradCheck pipeline_gradcheck(std::uint64_t seed, double h,
                                     std::size_t max_entries_per_block) {
    ModelConfig mc;
    mc.d_in = 4;
    mc.enc_layers = 2;
    mc.enc_hidden = 10;
    mc.enc_emb = 6;
    mc.enc_out = 5;
    mc.rel_layers = 2;
    mc.rel_adj_hidden = 8;
    mc.rel_adj_mid = 6;
    mc.rel_upd_hidden = 8;
    mc.proto_dim = 7;
    mc.enc_dropout = 0.0;
    mc.hyper_dropout = 0.0;
    Model model = build_model(mc, seed);

    // 1-shot episode of 3-node graphs
    SyntheticSpec spec;
    spec.feature_dim = mc.d_in;
    spec.min_nodes = 4;
    spec.max_nodes = 4;
    spec.node_types = 2;
    std::vector<Task> tasks = generate_tasks(derive_seed(seed, 0x67636bULL), 2, 8, spec);
    // shrink every graph to its first 3 nodes
    for (Task& t : tasks) {
        for (LabeledGraph& lg : t.pool) {
            MolecularGraph g;
            std::vector<double> feats;
            for (int v = 0; v < 3; ++v) {
                for (int d = 0; d < mc.d_in; ++d) {
                    feats.push_back(lg.graph.node_features.at(v, d));
                }
            }
            g.node_features = Tensor::matrix(3, mc.d_in, std::move(feats));
            for (const auto& e : lg.graph.edges) {
                if (e[0] < 3 && e[1] < 3) g.edges.push_back(e);
            }
            lg.graph = std::move(g);
        }
    }
    RngStream rng(derive_seed(seed, 0x657073ULL));
    Episode ep = sample_episode(tasks[0], SupportMode::kBalanced, 1, 3, rng);

    RunOptions opts;
    opts.mode = RunMode::kTrain;  // soft depth mixing active
    opts.dropout_enabled = false;

    auto f = [&](bool with_grad) {
        Tape tape;
        ForwardOutput out = forward_episode(model, tape, ep, opts);
        if (with_grad) tape.backward(out.loss);
        return out.result.loss;
    };

    const auto t0 = std::chrono::steady_clock::now();
    PipelineGradCheck pg;
    pg.report = finite_diff_check(model.params, f, h, max_entries_per_block);
    pg.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return pg;
}

DumpStage dump_stage_from_string(const std::string& s) {
    if (s == "pre") return DumpStage::kPre;
    if (s == "post_task_adapt") return DumpStage::kPostTaskAdapt;
    if (s == "post_refine") return DumpStage::kPostRefine;
    throw std::runtime_error(
        fmt::format("unknown dump stage '{}' (want pre, post_task_adapt or post_refine)", s));
}

std::vector<EmbeddingRow> dump_embeddings(Model& model, const Episode& episode, DumpStage stage,
                                          const TrainConfig& cfg) {
    RunOptions opts = test_opts(cfg);
    opts.capture_embeddings = true;
    if (stage == DumpStage::kPre) {
        opts.ablation.task_adapt = false;
        opts.ablation.query_adapt = false;
    }

    Tape tape;
    ForwardOutput out = forward_episode(model, tape, episode, opts);

    std::vector<EmbeddingRow> rows;
    const int n_support = episode.support_size();
    auto support_id = [](int i) { return fmt::format("s{}", i); };
    auto query_id = [](int q) { return fmt::format("q{}", q); };

    if (stage == DumpStage::kPre || stage == DumpStage::kPostTaskAdapt) {
        for (int i = 0; i < n_support; ++i) {
            rows.push_back({support_id(i), episode.support_at(i).label,
                            out.result.captured_reprs[i]});
        }
        for (int q = 0; q < episode.query_size(); ++q) {
            rows.push_back({query_id(q), episode.query_at(q).label,
                            out.result.captured_reprs[n_support + q]});
        }
        return rows;
    }

    for (int q = 0; q < episode.query_size(); ++q) {
        const auto& rel = out.result.captured_refined[q];
        rows.push_back({fmt::format("q{}", q), episode.query_at(q).label, rel[0]});
        for (int i = 0; i < n_support; ++i) {
            rows.push_back({fmt::format("q{}:{}", q, support_id(i)),
                            episode.support_at(i).label, rel[1 + i]});
        }
    }
    return rows;
}

}  // namespace pacia
