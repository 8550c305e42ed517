#include "pacia/model.hpp"

#include <fmt/format.h>

#include <cmath>

namespace pacia {

ModMode mod_mode_from_string(const std::string& s) {
    if (s == "N") return ModMode::kN;
    if (s == "D") return ModMode::kD;
    if (s == "ND") return ModMode::kND;
    if (s == "off") return ModMode::kOff;
    throw std::runtime_error(fmt::format("unknown modulation mode '{}' (want N, D, ND or off)", s));
}

std::string to_string(ModMode m) {
    switch (m) {
        case ModMode::kN: return "N";
        case ModMode::kD: return "D";
        case ModMode::kND: return "ND";
        case ModMode::kOff: return "off";
    }
    return "?";
}

Model build_model(const ModelConfig& cfg, std::uint64_t seed) {
    Model m;
    m.cfg = cfg;
    RngStream rng(derive_seed(seed, 0x696e6974ULL));

    EncoderConfig ec;
    ec.d_in = cfg.d_in;
    ec.hidden = cfg.enc_hidden;
    ec.emb = cfg.enc_emb;
    ec.out = cfg.enc_out;
    ec.layers = cfg.enc_layers;
    ec.dropout = cfg.enc_dropout;
    m.encoder = make_gin_encoder(m.params, ec, rng);

    m.task_site = make_adapter_site(m.params, "task_adapter", cfg.enc_emb, cfg.proto_dim,
                                    cfg.enc_emb, /*takes_query=*/false, cfg.hyper_dropout, rng);

    RelationConfig rc;
    rc.dim = cfg.enc_out;
    rc.adj_hidden = cfg.rel_adj_hidden;
    rc.adj_mid = cfg.rel_adj_mid;
    rc.upd_hidden = cfg.rel_upd_hidden;
    rc.layers = cfg.rel_layers;
    rc.sigmoid_squash = cfg.adjacency_sigmoid;
    rc.exp_absdiff = cfg.adjacency_exp_input;
    m.relation = make_relation_predictor(m.params, rc, rng);

    m.query_site = make_adapter_site(m.params, "query_adapter", cfg.enc_out, cfg.proto_dim,
                                     cfg.enc_out, /*takes_query=*/true, cfg.hyper_dropout, rng);

    m.heads = make_head_generator(m.params, cfg.enc_out, rng);
    return m;
}

std::vector<double> EpisodeResult::active_scores() const {
    std::vector<double> s;
    s.reserve(probs.size());
    for (const auto& p : probs) s.push_back(p[1]);
    return s;
}

namespace {

struct EffectiveFilm {
    Var scale;
    Var shift;
};

// Identity constants used by the force-identity hook: modulation is still
// applied as arithmetic, with scale 1 and shift 0.
EffectiveFilm identity_film(Tape& tape, std::size_t dim) {
    return {tape.input(Tensor::full({dim}, 1.0)), tape.input(Tensor::zeros({dim}))};
}

EffectiveFilm effective_film(Tape& tape, const AdapterOutput& out, bool residual_scale) {
    EffectiveFilm f;
    f.scale = residual_scale
                  ? add(out.scale, tape.input(Tensor::full({out.scale.value().size()}, 1.0)))
                  : out.scale;
    f.shift = out.shift;
    return f;
}

}  // namespace

ForwardOutput forward_pass(Model& model, Tape& tape,
                           const std::vector<const LabeledGraph*>& support,
                           const std::vector<const LabeledGraph*>& targets,
                           const RunOptions& opts) {
    if (support.empty()) throw std::runtime_error("forward_pass: empty support set");
    if (targets.empty()) throw std::runtime_error("forward_pass: no prediction targets");

    const bool train = opts.mode == RunMode::kTrain;
    const bool use_dropout = train && opts.dropout_enabled;
    const Ablation& abl = opts.ablation;
    const ModelConfig& cfg = model.cfg;
    const int n_support = static_cast<int>(support.size());

    RngStream rng_enc(derive_seed(opts.dropout_seed, 0x656e63ULL));
    RngStream rng_hyper(derive_seed(opts.dropout_seed, 0x687970ULL));

    // Graph list: supports first, then any target not aliasing a support.
    std::vector<const LabeledGraph*> graphs = support;
    std::vector<int> target_slot(targets.size());
    for (std::size_t t = 0; t < targets.size(); ++t) {
        int slot = -1;
        for (int i = 0; i < n_support; ++i) {
            if (support[i] == targets[t]) {
                slot = i;
                break;
            }
        }
        if (slot < 0) {
            slot = static_cast<int>(graphs.size());
            graphs.push_back(targets[t]);
        }
        target_slot[t] = slot;
    }

    // ---- encoder pass, all graphs in lockstep ----
    const bool enc_hyper = abl.encoder_enabled();
    const bool enc_film = abl.encoder_film() || (enc_hyper && opts.force_identity_task);
    const bool enc_depth = abl.encoder_depth() && !opts.force_identity_task;

    std::vector<Var> adjs;
    std::vector<std::vector<Var>> hist(graphs.size());
    for (std::size_t i = 0; i < graphs.size(); ++i) {
        const MolecularGraph& g = graphs[i]->graph;
        g.validate();
        if (g.feature_dim() != cfg.d_in) {
            throw ShapeError(fmt::format("graph feature dim {} != configured d_in {}",
                                         g.feature_dim(), cfg.d_in));
        }
        adjs.push_back(tape.input(g.adjacency()));
        hist[i].push_back(model.encoder.project(tape, model.params, tape.input(g.node_features)));
    }

    std::vector<Var> enc_logits;
    std::vector<double> enc_logit_values;
    for (int l = 1; l <= cfg.enc_layers; ++l) {
        EffectiveFilm film;
        bool have_film = false;
        if (enc_hyper) {
            std::vector<SupportEmbedding> semb;
            for (int i = 0; i < n_support; ++i) {
                semb.push_back(SupportEmbedding{sum(hist[i].back(), 0),
                                                graphs[i]->graph.node_count(), graphs[i]->label});
            }
            Prototypes protos = compute_prototypes(tape, model.params, model.task_site, semb, l,
                                                   cfg.proto_order, use_dropout, &rng_hyper);
            AdapterOutput out =
                task_adapter(tape, model.params, model.task_site, protos, use_dropout, &rng_hyper);
            enc_logits.push_back(out.depth_logit);
            enc_logit_values.push_back(out.depth_logit.value()[0]);
            if (enc_film) {
                film = opts.force_identity_task
                           ? identity_film(tape, static_cast<std::size_t>(cfg.enc_emb))
                           : effective_film(tape, out, cfg.film_residual_scale);
                have_film = true;
            }
        }
        for (std::size_t i = 0; i < graphs.size(); ++i) {
            Var h = hist[i].back();
            if (have_film) h = film_modulate(h, film.scale, film.shift);
            h = model.encoder.gin_update(tape, model.params, adjs[i], h, l);
            if (use_dropout && cfg.enc_dropout > 0.0) {
                h = dropout(h, cfg.enc_dropout, rng_enc, true);
            }
            hist[i].push_back(h);
        }
    }

    EpisodeResult result;
    std::vector<Var> reprs(graphs.size());
    {
        Var enc_weights;
        int enc_selected = 0;
        if (enc_depth) {
            if (train) {
                enc_weights = depth_weights(tape, enc_logits);
                double mx = 0.0;
                for (std::size_t i = 0; i < enc_weights.value().size(); ++i) {
                    mx = std::max(mx, enc_weights.value()[i]);
                }
                result.depth_softmax_max.push_back(mx);
            } else {
                enc_selected = select_depth(enc_logit_values);
                result.encoder_depth = enc_selected;
            }
        }
        for (std::size_t i = 0; i < graphs.size(); ++i) {
            Var final_atoms;
            if (enc_depth && train) {
                final_atoms = mix_depths(
                    std::span<const Var>(hist[i].data() + 1, cfg.enc_layers), enc_weights);
            } else if (enc_depth) {
                final_atoms = hist[i][enc_selected];
            } else {
                final_atoms = hist[i].back();
            }
            reprs[i] = model.encoder.readout(tape, model.params, final_atoms);
            if (opts.capture_embeddings) {
                result.captured_reprs.push_back(reprs[i].value().values());
            }
        }
    }

    // ---- relation-graph predictor, one relation set per target ----
    const bool pred_hyper = abl.predictor_enabled();
    const bool pred_film = abl.predictor_film() || (pred_hyper && opts.force_identity_query);
    const bool pred_depth = abl.predictor_depth() && !opts.force_identity_query;

    std::vector<int> support_labels(n_support);
    for (int i = 0; i < n_support; ++i) support_labels[i] = support[i]->label;

    Var total_loss = tape.input(Tensor::scalar(0.0));
    for (std::size_t t = 0; t < targets.size(); ++t) {
        std::vector<Var> rows;
        rows.push_back(reprs[target_slot[t]]);
        for (int i = 0; i < n_support; ++i) rows.push_back(reprs[i]);
        std::vector<Var> rhist{stack_rows(rows)};

        std::vector<Var> rel_logits;
        std::vector<double> rel_logit_values;
        for (int l = 1; l <= cfg.rel_layers; ++l) {
            Var h = rhist.back();
            EffectiveFilm film;
            bool have_film = false;
            if (pred_hyper) {
                std::vector<SupportEmbedding> semb;
                for (int i = 0; i < n_support; ++i) {
                    semb.push_back(SupportEmbedding{row(h, 1 + i), 1, support_labels[i]});
                }
                Prototypes protos = compute_prototypes(tape, model.params, model.query_site, semb,
                                                       l, cfg.proto_order, use_dropout, &rng_hyper);
                AdapterOutput out = query_adapter(tape, model.params, model.query_site, protos,
                                                  row(h, 0), use_dropout, &rng_hyper);
                rel_logits.push_back(out.depth_logit);
                rel_logit_values.push_back(out.depth_logit.value()[0]);
                if (pred_film) {
                    film = opts.force_identity_query
                               ? identity_film(tape, static_cast<std::size_t>(cfg.enc_out))
                               : effective_film(tape, out, cfg.film_residual_scale);
                    have_film = true;
                }
            }
            if (have_film) h = film_modulate(h, film.scale, film.shift);
            Var a = model.relation.adjacency(tape, model.params, h);
            rhist.push_back(model.relation.refine(tape, model.params, h, a));
        }

        Var refined;
        if (pred_depth && train) {
            Var w = depth_weights(tape, rel_logits);
            double mx = 0.0;
            for (std::size_t i = 0; i < w.value().size(); ++i) {
                mx = std::max(mx, w.value()[i]);
            }
            result.depth_softmax_max.push_back(mx);
            refined = mix_depths(std::span<const Var>(rhist.data() + 1, cfg.rel_layers), w);
        } else if (pred_depth) {
            const int sel = select_depth(rel_logit_values);
            result.predictor_depths.push_back(sel);
            refined = rhist[sel];
        } else {
            refined = rhist.back();
        }

        if (opts.capture_embeddings) {
            std::vector<std::vector<double>> rows_out;
            for (int i = 0; i < n_support + 1; ++i) {
                rows_out.push_back(row(refined, i).value().values());
            }
            result.captured_refined.push_back(std::move(rows_out));
        }
        std::vector<Var> refined_support;
        for (int i = 0; i < n_support; ++i) refined_support.push_back(row(refined, 1 + i));
        ClassifierHead head =
            fit_head(tape, model.params, model.heads, refined_support, support_labels);
        Var probs = predict_probs(tape, head, row(refined, 0));

        const int label = targets[t]->label;
        result.probs.push_back({probs.value()[0], probs.value()[1]});
        result.labels.push_back(label);
        // Eq-style cross entropy: -y^T log(y_hat) with an epsilon clamp.
        Var nll = scale(log(clamp_min(pick(probs, static_cast<std::size_t>(label)), 1e-12)), -1.0);
        total_loss = add(total_loss, nll);
    }

    result.loss = total_loss.value()[0];
    return ForwardOutput{std::move(result), total_loss};
}

namespace {

std::vector<const LabeledGraph*> support_ptrs(const Episode& e) {
    std::vector<const LabeledGraph*> v;
    for (int i = 0; i < e.support_size(); ++i) v.push_back(&e.support_at(i));
    return v;
}

}  // namespace

ForwardOutput forward_episode(Model& model, Tape& tape, const Episode& episode,
                              const RunOptions& opts) {
    std::vector<const LabeledGraph*> targets;
    for (int q = 0; q < episode.query_size(); ++q) targets.push_back(&episode.query_at(q));
    return forward_pass(model, tape, support_ptrs(episode), targets, opts);
}

ForwardOutput forward_support(Model& model, Tape& tape, const Episode& episode,
                              const RunOptions& opts) {
    auto sup = support_ptrs(episode);
    return forward_pass(model, tape, sup, sup, opts);
}

EpisodeResult run_episode(Model& model, const Episode& episode, const RunOptions& opts) {
    Tape tape;
    return forward_episode(model, tape, episode, opts).result;
}

AdaptiveParamReport adaptive_param_report(const Model& model, const Ablation& ablation) {
    AdaptiveParamReport r;
    const ModelConfig& cfg = model.cfg;
    if (ablation.encoder_enabled()) {
        r.encoder_adaptive = static_cast<std::size_t>(cfg.enc_layers) * (2 * cfg.enc_emb + 1);
    }
    if (ablation.predictor_enabled()) {
        r.predictor_adaptive_per_query =
            static_cast<std::size_t>(cfg.rel_layers) * (2 * cfg.enc_out + 1);
    }
    r.adaptive_per_episode = r.encoder_adaptive + r.predictor_adaptive_per_query;
    r.total_params = model.params.value_count();
    r.ratio = static_cast<double>(r.adaptive_per_episode) / static_cast<double>(r.total_params);
    return r;
}

}  // namespace pacia
