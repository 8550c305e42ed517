#pragma once

#include "pacia/nn.hpp"

namespace pacia {

struct RelationConfig {
    int dim = 128;
    int adj_hidden = 256;
    int adj_mid = 128;
    int upd_hidden = 256;
    int layers = 5;
    bool sigmoid_squash = true;  // bound off-diagonal weights to (0,1)
    bool exp_absdiff = false;    // feed exp(|h_i - h_j|) instead of |h_i - h_j|
};

// Relation-graph refinement over one query plus all supports. The two MLPs
// are shared across layers.
struct RelationPredictor {
    RelationConfig cfg;
    Mlp adj_mlp;  // [dim] -> 1 per pair
    Mlp upd_mlp;  // [dim] -> dim

    // [m, dim] -> [m, m]; a_ii = 1 exactly, a_ij from the pair MLP.
    Var adjacency(Tape& tape, ParamStore& store, Var h) const;
    // h_i <- MLP(sum_j a_ij h_j)
    Var refine(Tape& tape, ParamStore& store, Var h, Var a) const;
};

RelationPredictor make_relation_predictor(ParamStore& store, const RelationConfig& cfg,
                                          RngStream& rng);

}  // namespace pacia
