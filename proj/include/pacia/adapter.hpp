#pragma once

#include <span>
#include <string>
#include <vector>

#include "pacia/nn.hpp"
#include "pacia/tape.hpp"

namespace pacia {

// One conditioning input to the prototype computation: the summed node
// embeddings of a support graph plus its node count and label. In the
// relation-graph predictor each molecule is a single node, so atom_sum is its
// row embedding and atom_count is 1.
struct SupportEmbedding {
    Var atom_sum;
    int atom_count = 1;
    int label = 0;
};

struct Prototypes {
    Var plus;
    Var minus;
    int layer = 0;
};

struct AdapterOutput {
    Var scale;        // [mod_dim]
    Var shift;        // [mod_dim]
    Var depth_logit;  // [1]
};

// Placement of the 1/|V| node normalization in the prototype computation:
// kEquation divides the prototype-MLP output by the node count, kTable
// averages node embeddings before the MLP.
enum class ProtoOrder { kEquation, kTable };

// A hypernetwork instance conditioning one network: the encoder (task level)
// or the relation-graph predictor (query level, which additionally feeds the
// query embedding into the adapter MLP).
struct AdapterSite {
    Mlp proto_mlp;  // [atom_dim + 2] -> proto_dim
    Mlp hyper_mlp;  // [2*proto_dim (+ atom_dim when takes_query)] -> 2*mod_dim + 1
    std::size_t atom_dim = 0;
    std::size_t proto_dim = 0;
    std::size_t mod_dim = 0;
    bool takes_query = false;
};

AdapterSite make_adapter_site(ParamStore& store, const std::string& name, std::size_t atom_dim,
                              std::size_t proto_dim, std::size_t mod_dim, bool takes_query,
                              double mlp_dropout, RngStream& rng);

// Class prototypes over a support set. Both classes must be nonempty. The
// per-class sums run over members sorted by contribution content, which makes
// the result bitwise independent of the support ordering.
Prototypes compute_prototypes(Tape& tape, ParamStore& store, const AdapterSite& site,
                              std::span<const SupportEmbedding> support, int layer,
                              ProtoOrder order, bool train = false, RngStream* rng = nullptr);

// Task-level adaptation: MLP over [r_plus | r_minus], split into
// (scale, shift, depth logit).
AdapterOutput task_adapter(Tape& tape, ParamStore& store, const AdapterSite& site,
                           const Prototypes& protos, bool train = false, RngStream* rng = nullptr);

// Query-level adaptation: MLP over [r_plus | r_minus | query_embedding].
AdapterOutput query_adapter(Tape& tape, ParamStore& store, const AdapterSite& site,
                            const Prototypes& protos, Var query_embedding, bool train = false,
                            RngStream* rng = nullptr);

// Elementwise scale (.) h + shift; h may be a vector or a matrix of row
// embeddings sharing one (scale, shift).
Var film_modulate(Var h, Var gamma_scale, Var gamma_shift);

// Softmax over per-layer depth logits (each shape [1]).
Var depth_weights(Tape& tape, std::span<const Var> logits);

// Weighted sum of per-layer embeddings by the depth weight vector.
Var mix_depths(std::span<const Var> per_layer, Var weights);

// 1-based argmax over depth logits; ties break toward the smallest layer.
int select_depth(std::span<const double> logits);

}  // namespace pacia
