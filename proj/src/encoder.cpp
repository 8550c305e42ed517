#include "pacia/encoder.hpp"

#include <fmt/format.h>

namespace pacia {

GinEncoder make_gin_encoder(ParamStore& store, const EncoderConfig& cfg, RngStream& rng) {
    GinEncoder enc;
    enc.cfg = cfg;
    enc.input_proj = make_linear(store, "encoder.input_proj", cfg.d_in, cfg.emb, rng);
    for (int l = 1; l <= cfg.layers; ++l) {
        GinLayer layer;
        layer.fc1 = make_linear(store, fmt::format("encoder.gin{}.fc1", l), cfg.emb, cfg.hidden, rng);
        layer.fc2 = make_linear(store, fmt::format("encoder.gin{}.fc2", l), cfg.hidden, cfg.emb, rng);
        layer.eps = store.add(fmt::format("encoder.gin{}.eps", l), Tensor::zeros({1}));
        enc.gin.push_back(layer);
    }
    MlpOptions ro;
    ro.activation = Activation::kLeakyRelu;
    enc.readout_mlp = make_mlp(store, "encoder.readout",
                               {static_cast<std::size_t>(cfg.emb), static_cast<std::size_t>(cfg.out),
                                static_cast<std::size_t>(cfg.out)},
                               ro, rng);
    return enc;
}

Var GinEncoder::project(Tape& tape, ParamStore& store, Var x) const {
    return input_proj(tape, store, x);
}

Var GinEncoder::gin_update(Tape& tape, ParamStore& store, Var adj, Var h, int layer) const {
    if (layer < 1 || layer > cfg.layers) {
        throw std::runtime_error(fmt::format("gin_update: layer {} outside 1..{}", layer, cfg.layers));
    }
    const GinLayer& gl = gin[layer - 1];
    Var eps = tape.leaf(store.at(gl.eps));
    Var agg = add(add(matmul(adj, h), h), mul_scalar(h, eps));
    Var hidden = relu(gl.fc1(tape, store, agg));
    return gl.fc2(tape, store, hidden);
}

Var GinEncoder::readout(Tape& tape, ParamStore& store, Var atoms) const {
    if (atoms.value().rank() != 2 || atoms.value().rows() == 0) {
        throw std::runtime_error("readout: needs a non-empty [n_atoms, emb] matrix");
    }
    return readout_mlp(tape, store, mean(atoms, 0));
}

EncodedMolecule encode(Tape& tape, ParamStore& store, const GinEncoder& enc,
                       const MolecularGraph& graph, const EncodeOptions& opts) {
    graph.validate();
    if (graph.feature_dim() != enc.cfg.d_in) {
        throw ShapeError(fmt::format("encode: graph feature dim {} != encoder d_in {}",
                                     graph.feature_dim(), enc.cfg.d_in));
    }
    if (opts.film && static_cast<int>(opts.film->per_layer.size()) != enc.cfg.layers) {
        throw std::runtime_error("encode: film sequence length != encoder layers");
    }
    if (opts.depth_logits && static_cast<int>(opts.depth_logits->size()) != enc.cfg.layers) {
        throw std::runtime_error("encode: depth logit count != encoder layers");
    }

    Var adj = tape.input(graph.adjacency());
    Var x = tape.input(graph.node_features);

    EncodedMolecule out;
    Var h = enc.project(tape, store, x);
    out.atom_layers.push_back(h);
    for (int l = 1; l <= enc.cfg.layers; ++l) {
        if (opts.film) {
            const auto& [s, b] = opts.film->per_layer[l - 1];
            h = film_modulate(h, s, b);
        }
        h = enc.gin_update(tape, store, adj, h, l);
        if (opts.train && opts.dropout_enabled && enc.cfg.dropout > 0.0) {
            if (!opts.dropout_rng) throw std::runtime_error("encode: dropout needs an rng");
            h = dropout(h, enc.cfg.dropout, *opts.dropout_rng, true);
        }
        out.atom_layers.push_back(h);
    }

    if (opts.depth_logits) {
        if (opts.train) {
            Var w = depth_weights(tape, *opts.depth_logits);
            out.final_atoms = mix_depths(
                std::span<const Var>(out.atom_layers.data() + 1, enc.cfg.layers), w);
        } else {
            std::vector<double> lv;
            for (const Var& v : *opts.depth_logits) lv.push_back(v.value()[0]);
            out.selected_depth = select_depth(lv);
            out.final_atoms = out.atom_layers[out.selected_depth];
        }
    } else {
        out.final_atoms = out.atom_layers.back();
    }
    out.repr = enc.readout(tape, store, out.final_atoms);
    return out;
}

}  // namespace pacia
