#include "pacia/classifier.hpp"

#include <fmt/format.h>

#include <algorithm>

namespace pacia {

HeadGenerator make_head_generator(ParamStore& store, std::size_t dim, RngStream& rng) {
    HeadGenerator gen;
    gen.dim = dim;
    MlpOptions opt;
    opt.skips = true;  // final layer stays a plain projection
    gen.w_plus = make_mlp(store, "head.w_plus", {dim, dim, dim, dim}, opt, rng);
    gen.b_plus = make_mlp(store, "head.b_plus", {dim, dim, dim, 1}, opt, rng);
    gen.w_minus = make_mlp(store, "head.w_minus", {dim, dim, dim, dim}, opt, rng);
    gen.b_minus = make_mlp(store, "head.b_minus", {dim, dim, dim, 1}, opt, rng);
    return gen;
}

namespace {

Var class_mean(std::span<const Var> refined, std::span<const int> labels, int label) {
    std::vector<Var> members;
    for (std::size_t i = 0; i < refined.size(); ++i) {
        if (labels[i] == label) members.push_back(refined[i]);
    }
    if (members.empty()) {
        throw std::runtime_error(
            fmt::format("classifier head: no support samples of class {}", label));
    }
    std::sort(members.begin(), members.end(), [](const Var& a, const Var& b) {
        return std::lexicographical_compare(a.value().values().begin(), a.value().values().end(),
                                            b.value().values().begin(), b.value().values().end());
    });
    const double inv = 1.0 / static_cast<double>(members.size());
    if (members.size() == 1) return members[0];
    return scale(sum(stack_rows(members), 0), inv);
}

}  // namespace

ClassifierHead fit_head(Tape& tape, ParamStore& store, const HeadGenerator& gen,
                        std::span<const Var> refined_support, std::span<const int> labels) {
    if (refined_support.size() != labels.size()) {
        throw std::runtime_error("fit_head: embeddings and labels differ in length");
    }
    Var mean_plus = class_mean(refined_support, labels, 1);
    Var mean_minus = class_mean(refined_support, labels, 0);
    ClassifierHead head;
    head.w_plus = gen.w_plus(tape, store, mean_plus);
    head.b_plus = gen.b_plus(tape, store, mean_plus);
    head.w_minus = gen.w_minus(tape, store, mean_minus);
    head.b_minus = gen.b_minus(tape, store, mean_minus);
    return head;
}

Var predict_probs(Tape& tape, const ClassifierHead& head, Var h) {
    (void)tape;
    Var logit_minus = add(dot(head.w_minus, h), head.b_minus);
    Var logit_plus = add(dot(head.w_plus, h), head.b_plus);
    return softmax(concat({logit_minus, logit_plus}));
}

}  // namespace pacia
