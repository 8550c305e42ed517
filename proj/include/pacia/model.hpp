#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pacia/adapter.hpp"
#include "pacia/classifier.hpp"
#include "pacia/encoder.hpp"
#include "pacia/graph.hpp"
#include "pacia/relgraph.hpp"

namespace pacia {

// Which message-passing aspects a site's hypernetwork modulates: node
// embeddings (N), propagation depth (D), both, or neither.
enum class ModMode { kN, kD, kND, kOff };

ModMode mod_mode_from_string(const std::string& s);
std::string to_string(ModMode m);

struct Ablation {
    bool task_adapt = true;
    bool query_adapt = true;
    ModMode encoder_mod = ModMode::kND;
    ModMode predictor_mod = ModMode::kND;
    bool finetune = false;  // test-time gradient adaptation instead of hypernetworks

    bool encoder_enabled() const { return task_adapt && encoder_mod != ModMode::kOff; }
    bool predictor_enabled() const { return query_adapt && predictor_mod != ModMode::kOff; }
    bool encoder_film() const {
        return encoder_enabled() && (encoder_mod == ModMode::kN || encoder_mod == ModMode::kND);
    }
    bool encoder_depth() const {
        return encoder_enabled() && (encoder_mod == ModMode::kD || encoder_mod == ModMode::kND);
    }
    bool predictor_film() const {
        return predictor_enabled() && (predictor_mod == ModMode::kN || predictor_mod == ModMode::kND);
    }
    bool predictor_depth() const {
        return predictor_enabled() && (predictor_mod == ModMode::kD || predictor_mod == ModMode::kND);
    }
};

struct ModelConfig {
    int d_in = 8;
    int enc_layers = 5;
    int enc_hidden = 600;
    int enc_emb = 300;
    int enc_out = 128;
    int rel_layers = 5;
    int rel_adj_hidden = 256;
    int rel_adj_mid = 128;
    int rel_upd_hidden = 256;
    int proto_dim = 300;
    double enc_dropout = 0.5;
    double hyper_dropout = 0.1;
    bool film_residual_scale = false;  // modulate with (1 + scale) instead of raw scale
    ProtoOrder proto_order = ProtoOrder::kEquation;
    bool adjacency_sigmoid = true;
    bool adjacency_exp_input = false;
};

struct Model {
    ModelConfig cfg;
    ParamStore params;
    GinEncoder encoder;
    AdapterSite task_site;
    RelationPredictor relation;
    AdapterSite query_site;
    HeadGenerator heads;
};

Model build_model(const ModelConfig& cfg, std::uint64_t seed);

enum class RunMode { kTrain, kTest };

struct RunOptions {
    RunMode mode = RunMode::kTest;
    Ablation ablation;
    // Keep a site's hypernetwork in the graph but override its outputs with
    // the identity modulation (scale 1, shift 0, depth off). Diagnostic hooks.
    bool force_identity_task = false;
    bool force_identity_query = false;
    std::uint64_t dropout_seed = 0;
    bool dropout_enabled = true;  // only honored in train mode
    bool capture_embeddings = false;
};

struct EpisodeResult {
    std::vector<std::array<double, 2>> probs;  // per target: [p_inactive, p_active]
    std::vector<int> labels;
    std::vector<int> predictor_depths;  // 1-based per target (test mode with depth mod)
    int encoder_depth = 0;              // 1-based (test mode with depth mod)
    double loss = 0.0;
    // Train mode with active depth modulation: the largest softmax weight of
    // each depth distribution (encoder first, then one per target).
    std::vector<double> depth_softmax_max;

    // Filled when RunOptions::capture_embeddings is set: molecular
    // representations (supports first, then non-aliasing targets) and the
    // refined relation rows per target ([query, supports...]).
    std::vector<std::vector<double>> captured_reprs;
    std::vector<std::vector<std::vector<double>>> captured_refined;

    std::vector<double> active_scores() const;
};

// Full forward pass for arbitrary prediction targets against a support set.
// `targets` may alias support entries (used for MAML support loss). The loss
// Var stays valid while `tape` lives.
struct ForwardOutput {
    EpisodeResult result;
    Var loss;
};

ForwardOutput forward_pass(Model& model, Tape& tape,
                           const std::vector<const LabeledGraph*>& support,
                           const std::vector<const LabeledGraph*>& targets,
                           const RunOptions& opts);

ForwardOutput forward_episode(Model& model, Tape& tape, const Episode& episode,
                              const RunOptions& opts);

// Support-set loss: every support sample predicted as the query of its own
// relation set.
ForwardOutput forward_support(Model& model, Tape& tape, const Episode& episode,
                              const RunOptions& opts);

// Convenience wrapper that owns its tape (no backward possible).
EpisodeResult run_episode(Model& model, const Episode& episode, const RunOptions& opts);

// Values produced by the hypernetworks per episode vs. the trainable
// parameter count.
struct AdaptiveParamReport {
    std::size_t encoder_adaptive = 0;             // sum over layers of 2*d_enc+1
    std::size_t predictor_adaptive_per_query = 0; // sum over layers of 2*d_rel+1
    std::size_t adaptive_per_episode = 0;         // encoder + one query's worth
    std::size_t total_params = 0;                 // |Theta|
    double ratio = 0.0;
};

AdaptiveParamReport adaptive_param_report(const Model& model, const Ablation& ablation);

}  // namespace pacia
