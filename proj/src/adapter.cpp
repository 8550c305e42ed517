#include "pacia/adapter.hpp"

#include <fmt/format.h>

#include <algorithm>

namespace pacia {

AdapterSite make_adapter_site(ParamStore& store, const std::string& name, std::size_t atom_dim,
                              std::size_t proto_dim, std::size_t mod_dim, bool takes_query,
                              double mlp_dropout, RngStream& rng) {
    AdapterSite site;
    site.atom_dim = atom_dim;
    site.proto_dim = proto_dim;
    site.mod_dim = mod_dim;
    site.takes_query = takes_query;

    MlpOptions proto_opt;
    proto_opt.skips = true;
    proto_opt.skip_final = true;
    proto_opt.dropout = mlp_dropout;
    site.proto_mlp = make_mlp(store, name + ".proto", {atom_dim + 2, proto_dim, proto_dim, proto_dim},
                              proto_opt, rng);

    const std::size_t hyper_in = 2 * proto_dim + (takes_query ? atom_dim : 0);
    const std::size_t hyper_out = 2 * mod_dim + 1;
    MlpOptions hyper_opt;
    hyper_opt.skips = true;
    hyper_opt.skip_final = true;
    hyper_opt.dropout = mlp_dropout;
    site.hyper_mlp = make_mlp(store, name + ".hyper", {hyper_in, hyper_out, hyper_out, hyper_out},
                              hyper_opt, rng);
    return site;
}

namespace {

// Sum a set of equally shaped vectors in a content-canonical order, so the
// result does not depend on the caller's ordering.
Var canonical_sum(std::vector<Var> parts) {
    std::sort(parts.begin(), parts.end(), [](const Var& a, const Var& b) {
        return std::lexicographical_compare(a.value().values().begin(), a.value().values().end(),
                                            b.value().values().begin(), b.value().values().end());
    });
    if (parts.size() == 1) return parts[0];
    return sum(stack_rows(parts), 0);
}

Var class_prototype(Tape& tape, ParamStore& store, const AdapterSite& site,
                    std::span<const SupportEmbedding> support, int label, ProtoOrder order,
                    bool train, RngStream* rng) {
    std::vector<Var> contribs;
    for (const SupportEmbedding& s : support) {
        if (s.label != label) continue;
        if (s.atom_sum.value().size() != site.atom_dim) {
            throw ShapeError(fmt::format("prototype input dim {} != adapter site atom dim {}",
                                         s.atom_sum.value().size(), site.atom_dim));
        }
        const double inv_nodes = 1.0 / static_cast<double>(s.atom_count);
        Var one_hot = tape.input(Tensor::vec({s.label == 0 ? 1.0 : 0.0, s.label == 1 ? 1.0 : 0.0}));
        Var contrib;
        if (order == ProtoOrder::kEquation) {
            Var x = concat({s.atom_sum, one_hot});
            contrib = scale(site.proto_mlp(tape, store, x, train, rng), inv_nodes);
        } else {
            Var x = concat({scale(s.atom_sum, inv_nodes), one_hot});
            contrib = site.proto_mlp(tape, store, x, train, rng);
        }
        contribs.push_back(contrib);
    }
    if (contribs.empty()) {
        throw std::runtime_error(
            fmt::format("prototype for class {} undefined: no support samples of that class", label));
    }
    const double inv_count = 1.0 / static_cast<double>(contribs.size());
    return scale(canonical_sum(std::move(contribs)), inv_count);
}

AdapterOutput split_adapter_output(Var out, std::size_t mod_dim) {
    AdapterOutput r;
    r.scale = slice(out, 0, mod_dim);
    r.shift = slice(out, mod_dim, mod_dim);
    r.depth_logit = slice(out, 2 * mod_dim, 1);
    return r;
}

}  // namespace

Prototypes compute_prototypes(Tape& tape, ParamStore& store, const AdapterSite& site,
                              std::span<const SupportEmbedding> support, int layer,
                              ProtoOrder order, bool train, RngStream* rng) {
    Prototypes p;
    p.layer = layer;
    p.plus = class_prototype(tape, store, site, support, 1, order, train, rng);
    p.minus = class_prototype(tape, store, site, support, 0, order, train, rng);
    return p;
}

AdapterOutput task_adapter(Tape& tape, ParamStore& store, const AdapterSite& site,
                           const Prototypes& protos, bool train, RngStream* rng) {
    if (site.takes_query) throw std::runtime_error("task_adapter called on a query-level site");
    Var out = site.hyper_mlp(tape, store, concat({protos.plus, protos.minus}), train, rng);
    return split_adapter_output(out, site.mod_dim);
}

AdapterOutput query_adapter(Tape& tape, ParamStore& store, const AdapterSite& site,
                            const Prototypes& protos, Var query_embedding, bool train,
                            RngStream* rng) {
    if (!site.takes_query) throw std::runtime_error("query_adapter called on a task-level site");
    if (query_embedding.value().size() != site.atom_dim) {
        throw ShapeError(fmt::format("query embedding dim {} != adapter site atom dim {}",
                                     query_embedding.value().size(), site.atom_dim));
    }
    Var out =
        site.hyper_mlp(tape, store, concat({protos.plus, protos.minus, query_embedding}), train, rng);
    return split_adapter_output(out, site.mod_dim);
}

Var film_modulate(Var h, Var gamma_scale, Var gamma_shift) {
    const std::size_t d = gamma_scale.value().size();
    if (gamma_shift.value().size() != d) {
        throw ShapeError(fmt::format("film_modulate: scale dim {} != shift dim {}", d,
                                     gamma_shift.value().size()));
    }
    if (h.value().rank() == 1) {
        if (h.value().size() != d) {
            throw ShapeError(fmt::format("film_modulate: embedding dim {} != modulation dim {}",
                                         h.value().size(), d));
        }
        return add(mul(h, gamma_scale), gamma_shift);
    }
    if (h.value().cols() != d) {
        throw ShapeError(fmt::format("film_modulate: embedding dim {} != modulation dim {}",
                                     h.value().cols(), d));
    }
    return add_rowvec(mul_rowvec(h, gamma_scale), gamma_shift);
}

Var depth_weights(Tape& tape, std::span<const Var> logits) {
    (void)tape;
    if (logits.empty()) throw std::runtime_error("depth_weights: no logits");
    for (const Var& l : logits) {
        if (l.value().size() != 1) {
            throw ShapeError(fmt::format("depth logit must be a scalar, got {}",
                                         shape_str(l.value().shape())));
        }
    }
    return softmax(concat(logits));
}

Var mix_depths(std::span<const Var> per_layer, Var weights) {
    if (per_layer.empty()) throw std::runtime_error("mix_depths: no layers");
    if (weights.value().size() != per_layer.size()) {
        throw ShapeError(fmt::format("mix_depths: {} layers but {} weights", per_layer.size(),
                                     weights.value().size()));
    }
    const auto& shape0 = per_layer[0].value().shape();
    for (const Var& h : per_layer) {
        if (h.value().shape() != shape0) {
            throw ShapeError("mix_depths: layer embeddings must share one shape");
        }
    }
    Var acc = mul_scalar(per_layer[0], pick(weights, 0));
    for (std::size_t l = 1; l < per_layer.size(); ++l) {
        acc = add(acc, mul_scalar(per_layer[l], pick(weights, l)));
    }
    return acc;
}

int select_depth(std::span<const double> logits) {
    if (logits.empty()) throw std::runtime_error("select_depth: no logits");
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i) {
        if (logits[i] > logits[best]) best = i;
    }
    return static_cast<int>(best) + 1;
}

}  // namespace pacia
