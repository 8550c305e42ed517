#include "pacia/relgraph.hpp"

#include <fmt/format.h>

namespace pacia {

RelationPredictor make_relation_predictor(ParamStore& store, const RelationConfig& cfg,
                                          RngStream& rng) {
    RelationPredictor rp;
    rp.cfg = cfg;
    MlpOptions adj_opt;  // LeakyReLU between, plain scalar output
    rp.adj_mlp = make_mlp(store, "relation.adj",
                          {static_cast<std::size_t>(cfg.dim), static_cast<std::size_t>(cfg.adj_hidden),
                           static_cast<std::size_t>(cfg.adj_mid), 1},
                          adj_opt, rng);
    MlpOptions upd_opt;
    upd_opt.activate_final = true;
    rp.upd_mlp = make_mlp(store, "relation.update",
                          {static_cast<std::size_t>(cfg.dim), static_cast<std::size_t>(cfg.upd_hidden),
                           static_cast<std::size_t>(cfg.dim)},
                          upd_opt, rng);
    return rp;
}

Var RelationPredictor::adjacency(Tape& tape, ParamStore& store, Var h) const {
    if (h.value().rank() != 2 || static_cast<int>(h.value().cols()) != cfg.dim) {
        throw ShapeError(fmt::format("relation adjacency: expected [m,{}], got {}", cfg.dim,
                                     shape_str(h.value().shape())));
    }
    const std::size_t m = h.value().rows();
    Var d = abs(pairwise_diff(h));  // [m*m, dim]
    if (cfg.exp_absdiff) d = exp(d);
    Var raw = reshape(adj_mlp(tape, store, d), {m, m});
    if (cfg.sigmoid_squash) raw = sigmoid(raw);

    Tensor off_diag = Tensor::full({m, m}, 1.0);
    Tensor eye = Tensor::zeros({m, m});
    for (std::size_t i = 0; i < m; ++i) {
        off_diag.at(i, i) = 0.0;
        eye.at(i, i) = 1.0;
    }
    return add(mul(raw, tape.input(std::move(off_diag))), tape.input(std::move(eye)));
}

Var RelationPredictor::refine(Tape& tape, ParamStore& store, Var h, Var a) const {
    if (a.value().rank() != 2 || a.value().rows() != a.value().cols() ||
        a.value().rows() != h.value().rows()) {
        throw ShapeError(fmt::format("relation refine: adjacency {} does not match embeddings {}",
                                     shape_str(a.value().shape()), shape_str(h.value().shape())));
    }
    return upd_mlp(tape, store, matmul(a, h));
}

}  // namespace pacia
