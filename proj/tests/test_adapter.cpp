#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pacia/adapter.hpp"
#include "pacia/gradcheck.hpp"

using namespace pacia;

namespace {

// MLP whose single layer is the identity map.
Mlp identity_mlp(ParamStore& store, const std::string& name, std::size_t dim) {
    RngStream rng(0);
    Mlp mlp = make_mlp(store, name, {dim, dim}, MlpOptions{}, rng);
    Param& w = store.at(mlp.layers[0].w);
    w.value.fill(0.0);
    for (std::size_t i = 0; i < dim; ++i) w.value.at(i, i) = 1.0;
    return mlp;
}

AdapterSite random_site(ParamStore& store, const std::string& name, std::size_t atom_dim,
                        std::size_t proto_dim, std::size_t mod_dim, bool takes_query,
                        std::uint64_t seed) {
    RngStream rng(seed);
    return make_adapter_site(store, name, atom_dim, proto_dim, mod_dim, takes_query, 0.0, rng);
}

std::vector<SupportEmbedding> random_support(Tape& tape, RngStream& rng, int n, std::size_t dim) {
    std::vector<SupportEmbedding> out;
    for (int i = 0; i < n; ++i) {
        Tensor t = Tensor::uninit({dim});
        for (std::size_t j = 0; j < dim; ++j) t[j] = rng.uniform(-1.0, 1.0);
        out.push_back({tape.input(std::move(t)), rng.uniform_int(1, 6), i % 2});
    }
    return out;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] != b[i]) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("compute_prototypes: hand evaluation with the identity MLP") {
    // 1-shot support, single-atom graph with h = [1, 0], active label one-hot
    // [0, 1]: the prototype is [1, 0, 0, 1] scaled by 1/(1*1)
    ParamStore store;
    AdapterSite site;
    site.atom_dim = 2;
    site.proto_dim = 4;
    site.mod_dim = 2;
    site.proto_mlp = identity_mlp(store, "proto", 4);

    Tape tape;
    std::vector<SupportEmbedding> support{
        {tape.input(Tensor::vec({1.0, 0.0})), 1, 1},
        {tape.input(Tensor::vec({0.5, 0.5})), 1, 0},
    };
    Prototypes p =
        compute_prototypes(tape, store, site, support, 1, ProtoOrder::kEquation);
    const Tensor& plus = p.plus.value();
    REQUIRE(plus.size() == 4);
    CHECK(plus[0] == 1.0);
    CHECK(plus[1] == 0.0);
    CHECK(plus[2] == 0.0);
    CHECK(plus[3] == 1.0);
    const Tensor& minus = p.minus.value();
    CHECK(minus[0] == 0.5);
    CHECK(minus[3] == 0.0);
}

TEST_CASE("compute_prototypes: equation mode divides by the atom count after the MLP") {
    ParamStore store;
    AdapterSite site;
    site.atom_dim = 1;
    site.proto_dim = 3;
    site.mod_dim = 1;
    site.proto_mlp = identity_mlp(store, "proto", 3);

    Tape tape;
    // one active molecule with 4 atoms whose embeddings sum to [8]
    std::vector<SupportEmbedding> support{
        {tape.input(Tensor::vec({8.0})), 4, 1},
        {tape.input(Tensor::vec({2.0})), 2, 0},
    };
    Prototypes eq = compute_prototypes(tape, store, site, support, 1, ProtoOrder::kEquation);
    CHECK(eq.plus.value()[0] == 2.0);   // identity([8 | 0 1]) / 4
    CHECK(eq.plus.value()[2] == 0.25);  // label bit also divided in equation mode

    Prototypes tb = compute_prototypes(tape, store, site, support, 1, ProtoOrder::kTable);
    CHECK(tb.plus.value()[0] == 2.0);  // identity([8/4 | 0 1])
    CHECK(tb.plus.value()[2] == 1.0);  // label bit kept whole in table mode
}

TEST_CASE("compute_prototypes: duplicated support equals the single sample") {
    ParamStore store;
    AdapterSite site = random_site(store, "site", 3, 5, 3, false, 21);
    Tape tape;
    Var h = tape.input(Tensor::vec({0.3, -0.7, 1.1}));
    Var hn = tape.input(Tensor::vec({-0.2, 0.4, 0.9}));
    std::vector<SupportEmbedding> once{{h, 2, 1}, {hn, 3, 0}};
    std::vector<SupportEmbedding> twice{{h, 2, 1}, {h, 2, 1}, {hn, 3, 0}};
    Prototypes a = compute_prototypes(tape, store, site, once, 1, ProtoOrder::kEquation);
    Prototypes b = compute_prototypes(tape, store, site, twice, 1, ProtoOrder::kEquation);
    CHECK(bitwise_equal(a.plus.value(), b.plus.value()));
    CHECK(bitwise_equal(a.minus.value(), b.minus.value()));
}

TEST_CASE("compute_prototypes: empty class is an error") {
    ParamStore store;
    AdapterSite site = random_site(store, "site", 3, 5, 3, false, 2);
    Tape tape;
    std::vector<SupportEmbedding> support{{tape.input(Tensor::vec({1.0, 2.0, 3.0})), 1, 1}};
    CHECK_THROWS_WITH_AS(
        compute_prototypes(tape, store, site, support, 1, ProtoOrder::kEquation),
        doctest::Contains("class"), std::runtime_error);
}

TEST_CASE("adapters are bitwise invariant to the support order") {
    ParamStore store;
    AdapterSite task_site = random_site(store, "task", 6, 8, 6, false, 31);
    AdapterSite query_site = random_site(store, "query", 6, 8, 6, true, 32);
    RngStream rng(77);

    for (int trial = 0; trial < 20; ++trial) {
        Tape tape;
        std::vector<SupportEmbedding> support = random_support(tape, rng, 9, 6);
        std::vector<SupportEmbedding> shuffled = support;
        rng.shuffle(shuffled);

        Prototypes pa = compute_prototypes(tape, store, task_site, support, 1,
                                           ProtoOrder::kEquation);
        Prototypes pb = compute_prototypes(tape, store, task_site, shuffled, 1,
                                           ProtoOrder::kEquation);
        CHECK(bitwise_equal(pa.plus.value(), pb.plus.value()));
        CHECK(bitwise_equal(pa.minus.value(), pb.minus.value()));

        AdapterOutput ta = task_adapter(tape, store, task_site, pa);
        AdapterOutput tb = task_adapter(tape, store, task_site, pb);
        CHECK(bitwise_equal(ta.scale.value(), tb.scale.value()));
        CHECK(bitwise_equal(ta.shift.value(), tb.shift.value()));
        CHECK(ta.depth_logit.value()[0] == tb.depth_logit.value()[0]);

        Var q = tape.input(Tensor::vec({0.1, 0.2, 0.3, -0.1, -0.2, -0.3}));
        Prototypes qa = compute_prototypes(tape, store, query_site, support, 1,
                                           ProtoOrder::kEquation);
        Prototypes qb = compute_prototypes(tape, store, query_site, shuffled, 1,
                                           ProtoOrder::kEquation);
        AdapterOutput oa = query_adapter(tape, store, query_site, qa, q);
        AdapterOutput ob = query_adapter(tape, store, query_site, qb, q);
        CHECK(bitwise_equal(oa.scale.value(), ob.scale.value()));
        CHECK(bitwise_equal(oa.shift.value(), ob.shift.value()));
        CHECK(oa.depth_logit.value()[0] == ob.depth_logit.value()[0]);
    }
}

TEST_CASE("task_adapter: output split matches 2d+1 with the reference dims") {
    ParamStore store;
    AdapterSite site = random_site(store, "task", 300, 300, 300, false, 5);
    CHECK(site.hyper_mlp.out_dim() == 601);
    Tape tape;
    RngStream rng(8);
    std::vector<SupportEmbedding> support = random_support(tape, rng, 4, 300);
    Prototypes p = compute_prototypes(tape, store, site, support, 1, ProtoOrder::kEquation);
    AdapterOutput out = task_adapter(tape, store, site, p);
    CHECK(out.scale.value().size() == 300);
    CHECK(out.shift.value().size() == 300);
    CHECK(out.depth_logit.value().size() == 1);
}

TEST_CASE("query_adapter: output split matches 2d+1 with the reference dims") {
    ParamStore store;
    AdapterSite site = random_site(store, "query", 128, 300, 128, true, 6);
    CHECK(site.hyper_mlp.out_dim() == 257);
    Tape tape;
    RngStream rng(9);
    std::vector<SupportEmbedding> support = random_support(tape, rng, 4, 128);
    Prototypes p = compute_prototypes(tape, store, site, support, 1, ProtoOrder::kEquation);
    Tensor q = Tensor::uninit({128});
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = rng.uniform(-1.0, 1.0);
    AdapterOutput out = query_adapter(tape, store, site, p, tape.input(std::move(q)));
    CHECK(out.scale.value().size() == 128);
    CHECK(out.shift.value().size() == 128);
    CHECK(out.depth_logit.value().size() == 1);
}

TEST_CASE("task_adapter: zero hypernetwork weights give the zero modulation") {
    ParamStore store;
    AdapterSite site = random_site(store, "task", 4, 4, 4, false, 11);
    for (const Linear& l : site.hyper_mlp.layers) {
        store.at(l.w).value.fill(0.0);
        store.at(l.b).value.fill(0.0);
    }
    Tape tape;
    RngStream rng(3);
    std::vector<SupportEmbedding> support = random_support(tape, rng, 4, 4);
    Prototypes p = compute_prototypes(tape, store, site, support, 1, ProtoOrder::kEquation);
    AdapterOutput out = task_adapter(tape, store, site, p);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(out.scale.value()[i] == 0.0);
        CHECK(out.shift.value()[i] == 0.0);
    }
    CHECK(out.depth_logit.value()[0] == 0.0);
}

TEST_CASE("task_adapter: swapping the class prototypes changes the output") {
    ParamStore store;
    AdapterSite site = random_site(store, "task", 5, 6, 5, false, 13);
    Tape tape;
    RngStream rng(14);
    std::vector<SupportEmbedding> support = random_support(tape, rng, 6, 5);
    Prototypes p = compute_prototypes(tape, store, site, support, 1, ProtoOrder::kEquation);
    Prototypes swapped{p.minus, p.plus, p.layer};
    AdapterOutput a = task_adapter(tape, store, site, p);
    AdapterOutput b = task_adapter(tape, store, site, swapped);
    CHECK(!bitwise_equal(a.scale.value(), b.scale.value()));
}

TEST_CASE("query_adapter: distinct queries give distinct outputs") {
    ParamStore store;
    AdapterSite site = random_site(store, "query", 5, 6, 5, true, 17);
    Tape tape;
    RngStream rng(18);
    std::vector<SupportEmbedding> support = random_support(tape, rng, 6, 5);
    Prototypes p = compute_prototypes(tape, store, site, support, 1, ProtoOrder::kEquation);
    Var q1 = tape.input(Tensor::vec({1.0, 0.0, 0.0, 0.0, 0.0}));
    Var q2 = tape.input(Tensor::vec({0.0, 1.0, 0.0, 0.0, 0.0}));
    AdapterOutput a = query_adapter(tape, store, site, p, q1);
    AdapterOutput b = query_adapter(tape, store, site, p, q2);
    CHECK(!bitwise_equal(a.scale.value(), b.scale.value()));
}

TEST_CASE("film_modulate: identity, absorbing and arithmetic cases") {
    Tape tape;
    Var h = tape.input(Tensor::vec({3.0, 4.0}));

    Var id = film_modulate(h, tape.input(Tensor::vec({1.0, 1.0})),
                           tape.input(Tensor::vec({0.0, 0.0})));
    CHECK(id.value()[0] == 3.0);
    CHECK(id.value()[1] == 4.0);

    Var absorbed = film_modulate(h, tape.input(Tensor::vec({0.0, 0.0})),
                                 tape.input(Tensor::vec({-2.0, 5.0})));
    CHECK(absorbed.value()[0] == -2.0);
    CHECK(absorbed.value()[1] == 5.0);

    Var out = film_modulate(h, tape.input(Tensor::vec({2.0, 0.5})),
                            tape.input(Tensor::vec({1.0, -1.0})));
    CHECK(out.value()[0] == 7.0);
    CHECK(out.value()[1] == 1.0);

    // matrix rows share one modulation
    Var m = tape.input(Tensor::matrix(2, 2, {3, 4, 1, 2}));
    Var mo = film_modulate(m, tape.input(Tensor::vec({2.0, 0.5})),
                           tape.input(Tensor::vec({1.0, -1.0})));
    CHECK(mo.value().at(0, 0) == 7.0);
    CHECK(mo.value().at(0, 1) == 1.0);
    CHECK(mo.value().at(1, 0) == 3.0);
    CHECK(mo.value().at(1, 1) == 0.0);

    CHECK_THROWS_AS(film_modulate(h, tape.input(Tensor::vec({1.0})),
                                  tape.input(Tensor::vec({0.0}))),
                    ShapeError);
}

TEST_CASE("depth_weights: symmetry, arithmetic and shift invariance") {
    Tape tape;
    std::vector<Var> equal;
    for (int i = 0; i < 5; ++i) equal.push_back(tape.input(Tensor::scalar(0.7)));
    Var w = depth_weights(tape, equal);
    for (int i = 0; i < 5; ++i) CHECK(w.value()[i] == doctest::Approx(0.2).epsilon(1e-14));

    std::vector<Var> two{tape.input(Tensor::scalar(0.0)),
                         tape.input(Tensor::scalar(std::log(2.0)))};
    Var w2 = depth_weights(tape, two);
    CHECK(std::fabs(w2.value()[0] - 1.0 / 3.0) <= 1e-12);
    CHECK(std::fabs(w2.value()[1] - 2.0 / 3.0) <= 1e-12);

    const double c = 13.5;
    std::vector<Var> shifted{tape.input(Tensor::scalar(0.0 + c)),
                             tape.input(Tensor::scalar(std::log(2.0) + c))};
    Var ws = depth_weights(tape, shifted);
    CHECK(std::fabs(ws.value()[0] - w2.value()[0]) <= 1e-12);
    CHECK(std::fabs(ws.value()[1] - w2.value()[1]) <= 1e-12);

    double total = 0.0;
    for (int i = 0; i < 5; ++i) total += w.value()[i];
    CHECK(std::fabs(total - 1.0) <= 1e-12);
}

TEST_CASE("mix_depths: selection, convexity and arithmetic") {
    Tape tape;
    std::vector<Var> layers{tape.input(Tensor::vec({1.0, 2.0})),
                            tape.input(Tensor::vec({-1.0, 0.5})),
                            tape.input(Tensor::vec({10.0, -3.0}))};
    Var onehot = tape.input(Tensor::vec({0.0, 0.0, 1.0}));
    Var picked = mix_depths(layers, onehot);
    CHECK(picked.value()[0] == 10.0);
    CHECK(picked.value()[1] == -3.0);

    std::vector<Var> same{tape.input(Tensor::vec({4.0})), tape.input(Tensor::vec({4.0}))};
    Var uniform = tape.input(Tensor::vec({0.5, 0.5}));
    CHECK(mix_depths(same, uniform).value()[0] == 4.0);

    std::vector<Var> pair{tape.input(Tensor::vec({4.0})), tape.input(Tensor::vec({0.0}))};
    Var wts = tape.input(Tensor::vec({0.25, 0.75}));
    CHECK(mix_depths(pair, wts).value()[0] == 1.0);
}

TEST_CASE("select_depth: argmax with smallest-index ties, shift invariant") {
    std::vector<double> logits{0.1, 0.9, 0.3};
    CHECK(select_depth(logits) == 2);  // 1-based

    std::vector<double> equal{0.4, 0.4, 0.4};
    CHECK(select_depth(equal) == 1);

    std::vector<double> shifted{0.1 + 5.0, 0.9 + 5.0, 0.3 + 5.0};
    CHECK(select_depth(shifted) == select_depth(logits));

    CHECK_THROWS_AS(select_depth(std::vector<double>{}), std::runtime_error);
}

TEST_CASE("select_depth agrees with the argmax of depth_weights") {
    RngStream rng(55);
    for (int t = 0; t < 100; ++t) {
        Tape tape;
        std::vector<Var> logits;
        std::vector<double> values;
        const int L = rng.uniform_int(1, 6);
        for (int i = 0; i < L; ++i) {
            const double v = rng.uniform(-3.0, 3.0);
            values.push_back(v);
            logits.push_back(tape.input(Tensor::scalar(v)));
        }
        Var w = depth_weights(tape, logits);
        int weight_argmax = 0;
        for (int i = 1; i < L; ++i) {
            if (w.value()[i] > w.value()[weight_argmax]) weight_argmax = i;
        }
        CHECK(select_depth(values) == weight_argmax + 1);
    }
}

TEST_CASE("adapter chain is differentiable end to end") {
    ParamStore store;
    AdapterSite site = random_site(store, "task", 4, 5, 4, false, 91);
    RngStream data_rng(92);
    Tensor s1 = Tensor::uninit({4});
    Tensor s2 = Tensor::uninit({4});
    Tensor hvec = Tensor::uninit({4});
    for (std::size_t i = 0; i < 4; ++i) {
        s1[i] = data_rng.uniform(-1.0, 1.0);
        s2[i] = data_rng.uniform(-1.0, 1.0);
        hvec[i] = data_rng.uniform(-1.0, 1.0);
    }
    auto f = [&](bool grad) {
        Tape tape;
        std::vector<SupportEmbedding> support{{tape.input(s1), 2, 1}, {tape.input(s2), 3, 0}};
        Prototypes p = compute_prototypes(tape, store, site, support, 1, ProtoOrder::kEquation);
        AdapterOutput out = task_adapter(tape, store, site, p);
        Var h = film_modulate(tape.input(hvec), out.scale, out.shift);
        Var w = depth_weights(tape, std::vector<Var>{out.depth_logit,
                                                     tape.input(Tensor::scalar(0.0))});
        Var mixed = mix_depths(std::vector<Var>{h, scale(h, 2.0)}, w);
        Var loss = sum_all(sigmoid(mixed));
        if (grad) tape.backward(loss);
        return loss.value()[0];
    };
    GradCheckReport rep = finite_diff_check(store, f, 1e-5);
    CHECK_MESSAGE(rep.pass(1e-4), rep.summary());
}
