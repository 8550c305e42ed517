#pragma once

#include <optional>
#include <vector>

#include "pacia/adapter.hpp"
#include "pacia/graph.hpp"
#include "pacia/nn.hpp"

namespace pacia {

struct EncoderConfig {
    int d_in = 8;
    int hidden = 600;
    int emb = 300;
    int out = 128;
    int layers = 5;
    double dropout = 0.5;
};

struct GinLayer {
    Linear fc1;
    Linear fc2;
    std::size_t eps = 0;  // param id of the per-layer scalar
};

// GIN message passing with a learned input projection and a two-layer mean
// readout. FiLM/depth hooks are driven by the caller.
struct GinEncoder {
    EncoderConfig cfg;
    Linear input_proj;
    std::vector<GinLayer> gin;
    Mlp readout_mlp;

    Var project(Tape& tape, ParamStore& store, Var x) const;  // [n,d_in] -> [n,emb]
    // h_v <- MLP_G((1+eps) h_v + sum_{u in H(v)} h_u); `adj` is the graph's
    // 0/1 adjacency as a constant on the tape.
    Var gin_update(Tape& tape, ParamStore& store, Var adj, Var h, int layer) const;
    Var readout(Tape& tape, ParamStore& store, Var atoms) const;  // [n,emb] -> [out]
};

GinEncoder make_gin_encoder(ParamStore& store, const EncoderConfig& cfg, RngStream& rng);

// Per-layer modulation supplied by the caller (identity when absent).
struct FilmSeq {
    std::vector<std::pair<Var, Var>> per_layer;  // effective (scale, shift)
};

struct EncodeOptions {
    bool train = false;
    const FilmSeq* film = nullptr;
    // Depth modulation: logits per layer; train mixes by softmax, test picks
    // the argmax layer. Without logits the last layer is used.
    const std::vector<Var>* depth_logits = nullptr;
    RngStream* dropout_rng = nullptr;
    bool dropout_enabled = false;
};

struct EncodedMolecule {
    std::vector<Var> atom_layers;  // h^0..h^L, [n, emb]
    Var final_atoms;               // mixed / selected layer
    Var repr;                      // [out]
    int selected_depth = 0;        // 1-based, test mode with depth logits
};

// Single-graph encode with fixed modulation. The episode-level pass (which
// regenerates modulation per layer from evolving support prototypes) lives in
// the model driver; this entry point covers tests, diagnostics and embedding
// dumps.
EncodedMolecule encode(Tape& tape, ParamStore& store, const GinEncoder& enc,
                       const MolecularGraph& graph, const EncodeOptions& opts);

}  // namespace pacia
