#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pacia/gradcheck.hpp"
#include "pacia/metrics.hpp"
#include "pacia/model.hpp"

namespace pacia {

enum class Metric { kRocAuc, kDeltaAuprc };

Metric metric_from_string(const std::string& s);
std::string to_string(Metric m);

struct TrainConfig {
    double lr = 0.006;
    int episodes_max = 25000;
    int query_size = 16;
    SupportMode support_mode = SupportMode::kBalanced;
    int k_shot = 10;        // balanced mode: per-class count
    int support_size = 16;  // sized mode: total support count
    Ablation ablation;
    std::uint64_t seed = 0;
    int eval_every = 10;  // validation cadence in episodes; 0 disables
    int eval_episodes_per_task = 4;
    Metric eval_metric = Metric::kRocAuc;
    int task_batch = 1;  // episodes accumulated per optimizer step
    double inner_lr = 0.01;
    int inner_steps = 1;
    bool dropout_enabled = true;
};

struct TrainLogRow {
    int episode = 0;
    std::string task_id;
    double loss = 0.0;
};

struct TrainResult {
    std::vector<TrainLogRow> log;
    std::vector<std::pair<int, double>> validation;  // (episode, mean metric)
    int best_episode = -1;
    double best_metric = 0.0;
};

// Episodic training (one episode per optimizer step by default). With a
// validation set the model is left at the best-validation parameters,
// otherwise at the final ones.
TrainResult train(Model& model, const std::vector<Task>& train_tasks,
                  const std::vector<Task>* valid_tasks, const TrainConfig& cfg);

struct EvalReport {
    std::vector<double> per_task;  // mean metric per task, task order preserved
    double mean = 0.0;
    int skipped_episodes = 0;  // single-class query sets (metric undefined)
};

// Deterministic regardless of worker count: episode RNG streams derive from
// (seed, task index, episode index). `n_workers` <= 0 picks a default capped
// by the PACIA_NUM_WORKERS environment variable.
EvalReport evaluate(Model& model, const std::vector<Task>& tasks, const TrainConfig& cfg,
                    int episodes_per_task, Metric metric, int n_workers = 0);

struct MamlAdaptResult {
    std::vector<Tensor> adapted_values;  // store-order parameter snapshot
    std::vector<double> support_losses;  // size steps+1: before and after each step
};

// First-order gradient adaptation on the support loss; the model's own
// parameters are left untouched.
MamlAdaptResult maml_adapt(Model& model, const Episode& episode, double inner_lr, int steps,
                           const RunOptions& opts);

struct MamlTrainResult {
    std::vector<TrainLogRow> log;  // outer query loss per episode
    std::vector<std::pair<double, double>> support_loss_before_after;
};

// Appendix-style MAML: inner adaptation on the support set, first-order outer
// update on the query loss at the adapted parameters.
MamlTrainResult maml_train(Model& model, const std::vector<Task>& train_tasks,
                           const TrainConfig& cfg);

enum class DumpStage { kPre, kPostTaskAdapt, kPostRefine };

DumpStage dump_stage_from_string(const std::string& s);

struct EmbeddingRow {
    std::string molecule_id;
    int label = 0;
    std::vector<double> vec;
};

std::vector<EmbeddingRow> dump_embeddings(Model& model, const Episode& episode, DumpStage stage,
                                          const TrainConfig& cfg);

// Collects per-episode scores into a metric value; throws on a single-class
// query set.
double episode_metric(const EpisodeResult& r, Metric metric);

// Episode loss -sum_q y_q . log(y_hat_q) with a 1e-12 clamp inside the log;
// the tape-side loss in the forward pass computes the same quantity.
double episode_nll(const std::vector<std::array<double, 2>>& probs,
                   const std::vector<int>& labels);

int default_worker_count(int n_tasks);

// Evaluation with per-episode gradient adaptation on the support set before
// prediction (the MAML / fine-tuning test procedure). Parallel workers run on
// private model copies; results are deterministic in the seed.
EvalReport evaluate_adapted(const Model& model, const std::vector<Task>& tasks,
                            const TrainConfig& cfg, int episodes_per_task, Metric metric,
                            int n_workers = 0);

// Full-pipeline finite-difference check: a small random model on a 1-shot
// episode of 3-node graphs, trained-mode forward with dropout disabled.
struct PipelineGradCheck {
    GradCheckReport report;
    double seconds = 0.0;
};

PipelineGradCheck pipeline_gradcheck(std::uint64_t seed, double h = 1e-5,
                                     std::size_t max_entries_per_block = 0);

}  // namespace pacia
