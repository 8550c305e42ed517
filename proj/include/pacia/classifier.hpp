#pragma once

#include <span>

#include "pacia/nn.hpp"

namespace pacia {

// Generates a per-episode linear classifier from class-mean support
// embeddings: four MLPs map the active/inactive means to (w, b) pairs.
struct HeadGenerator {
    Mlp w_plus;
    Mlp b_plus;
    Mlp w_minus;
    Mlp b_minus;
    std::size_t dim = 0;
};

HeadGenerator make_head_generator(ParamStore& store, std::size_t dim, RngStream& rng);

struct ClassifierHead {
    Var w_plus;
    Var w_minus;
    Var b_plus;   // [1]
    Var b_minus;  // [1]
};

// Both classes must be present. The class means are order-canonical sums, so
// the head is bitwise independent of the support ordering.
ClassifierHead fit_head(Tape& tape, ParamStore& store, const HeadGenerator& gen,
                        std::span<const Var> refined_support, std::span<const int> labels);

// softmax([w_- . h + b_-, w_+ . h + b_+]); index 1 is the active-class
// probability.
Var predict_probs(Tape& tape, const ClassifierHead& head, Var h);

}  // namespace pacia
