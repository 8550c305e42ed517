#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pacia/gradcheck.hpp"
#include "pacia/nn.hpp"
#include "pacia/tape.hpp"

using namespace pacia;

namespace {

Tensor rand_tensor(std::vector<std::size_t> shape, RngStream& rng, double lo = -2.0,
                   double hi = 2.0) {
    Tensor t = Tensor::uninit(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// keeps kinked ops (abs/relu/leaky) away from their nondifferentiable point
Tensor rand_tensor_away_from_zero(std::vector<std::size_t> shape, RngStream& rng) {
    Tensor t = rand_tensor(std::move(shape), rng);
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (std::fabs(t[i]) < 1e-2) t[i] += t[i] >= 0.0 ? 0.05 : -0.05;
    }
    return t;
}

}  // namespace

TEST_CASE("apply: catalog examples") {
    Tape tape;
    Var a = tape.input(Tensor::matrix(2, 2, {1, 2, 3, 4}));
    Var b = tape.input(Tensor::matrix(2, 1, {1, 1}));
    Var mm = pacia::apply("matmul", std::vector<Var>{a, b});
    CHECK(mm.value().shape() == std::vector<std::size_t>{2, 1});
    CHECK(mm.value()[0] == 3.0);
    CHECK(mm.value()[1] == 7.0);

    Var sm = pacia::apply("softmax", std::vector<Var>{tape.input(Tensor::vec({0, 0, 0}))});
    for (int i = 0; i < 3; ++i) CHECK(sm.value()[i] == doctest::Approx(1.0 / 3).epsilon(1e-14));

    Var lr = pacia::apply("leaky_relu", std::vector<Var>{tape.input(Tensor::vec({-1.0}))});
    CHECK(lr.value()[0] == doctest::Approx(-0.01).epsilon(1e-14));
}

TEST_CASE("apply: shape mismatch names the op and dims") {
    Tape tape;
    Var a = tape.input(Tensor::matrix(2, 2, {1, 2, 3, 4}));
    Var b = tape.input(Tensor::matrix(3, 1, {1, 1, 1}));
    try {
        pacia::apply("matmul", std::vector<Var>{a, b});
        FAIL("expected a shape error");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("matmul") != std::string::npos);
        CHECK(msg.find("[2,2]") != std::string::npos);
        CHECK(msg.find("[3,1]") != std::string::npos);
    }
}

TEST_CASE("apply: unknown op kind") {
    Tape tape;
    Var a = tape.input(Tensor::vec({1.0}));
    CHECK_THROWS_WITH_AS(pacia::apply("frobnicate", std::vector<Var>{a}),
                         doctest::Contains("unknown op kind"), std::runtime_error);
}

TEST_CASE("backward: d(x*x)/dx = 2x") {
    ParamStore store;
    store.add("x", Tensor::scalar(3.0));
    Tape tape;
    Var x = tape.leaf(store.at(0));
    Var loss = mul(x, x);
    store.zero_grads();
    tape.backward(loss);
    CHECK(store.at(0).grad[0] == 6.0);
}

TEST_CASE("backward: softmax pick at z=[0,0]") {
    // analytic jacobian row: [p0(1-p0), -p0 p1] = [0.25, -0.25]; cross-checked
    // against central differences below
    ParamStore store;
    store.add("z", Tensor::vec({0.0, 0.0}));
    auto f = [&](bool grad) {
        Tape tape;
        Var z = tape.leaf(store.at(0));
        Var loss = pick(softmax(z), 0);
        if (grad) tape.backward(loss);
        return loss.value()[0];
    };
    store.zero_grads();
    f(true);
    CHECK(store.at(0).grad[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(store.at(0).grad[1] == doctest::Approx(-0.25).epsilon(1e-12));

    const double h = 1e-5;
    for (int i = 0; i < 2; ++i) {
        const double orig = store.at(0).value[i];
        store.at(0).value[i] = orig + h;
        const double fp = f(false);
        store.at(0).value[i] = orig - h;
        const double fm = f(false);
        store.at(0).value[i] = orig;
        const double numeric = (fp - fm) / (2 * h);
        CHECK(std::fabs(numeric - store.at(0).grad[i]) < 1e-9);
    }
}

TEST_CASE("backward: unreachable leaf keeps an exactly zero gradient") {
    ParamStore store;
    store.add("used", Tensor::scalar(2.0));
    store.add("unused", Tensor::scalar(5.0));
    Tape tape;
    Var x = tape.leaf(store.at(0));
    tape.leaf(store.at(1));  // on the tape but not on any path to the loss
    Var loss = mul(x, x);
    store.zero_grads();
    tape.backward(loss);
    CHECK(store.at(0).grad[0] == 4.0);
    CHECK(store.at(1).grad[0] == 0.0);
}

TEST_CASE("backward: errors") {
    ParamStore store;
    store.add("x", Tensor::vec({1.0, 2.0}));
    Tape tape;
    Var x = tape.leaf(store.at(0));
    Var y = mul(x, x);
    CHECK_THROWS_AS(tape.backward(y), ShapeError);  // non-scalar loss
    Tape empty;
    Var bogus{&empty, 0};
    CHECK_THROWS_AS(empty.backward(bogus), std::runtime_error);  // nothing recorded
}

TEST_CASE("finite_diff_check: linear map is exact to 1e-6") {
    RngStream rng(11);
    ParamStore store;
    store.add("W", rand_tensor({3, 3}, rng));
    Tensor x = rand_tensor({3, 1}, rng);
    auto f = [&](bool grad) {
        Tape tape;
        Var w = tape.leaf(store.at(0));
        Var loss = sum_all(matmul(w, tape.input(x)));
        if (grad) tape.backward(loss);
        return loss.value()[0];
    };
    GradCheckReport rep = finite_diff_check(store, f, 1e-5);
    CHECK(rep.pass(1e-6));
}

TEST_CASE("finite_diff_check: central difference of x^2 is exact") {
    const double h = 1e-5;
    auto f = [](double x) { return x * x; };
    CHECK(std::fabs(6.0 - (f(3 + h) - f(3 - h)) / (2 * h)) <= 1e-6);

    ParamStore store;
    store.add("x", Tensor::scalar(3.0));
    auto g = [&](bool grad) {
        Tape tape;
        Var x = tape.leaf(store.at(0));
        Var loss = mul(x, x);
        if (grad) tape.backward(loss);
        return loss.value()[0];
    };
    CHECK(finite_diff_check(store, g, h).pass(1e-6));
}

TEST_CASE("finite_diff_check: softmax+log chain passes at 1e-4") {
    RngStream rng(23);
    ParamStore store;
    store.add("z", rand_tensor({5}, rng));
    auto f = [&](bool grad) {
        Tape tape;
        Var z = tape.leaf(store.at(0));
        Var loss = sum_all(log(clamp_min(softmax(z), 1e-12)));
        if (grad) tape.backward(loss);
        return loss.value()[0];
    };
    GradCheckReport rep = finite_diff_check(store, f, 1e-5);
    CHECK(rep.pass(1e-4));
}

TEST_CASE("finite_diff_check: nondeterministic function is rejected") {
    ParamStore store;
    store.add("x", Tensor::scalar(1.0));
    int calls = 0;
    auto f = [&](bool) -> double {
        return static_cast<double>(++calls);
    };
    CHECK_THROWS_WITH_AS(finite_diff_check(store, f, 1e-5),
                         doctest::Contains("nondeterministic"), std::runtime_error);
}

TEST_CASE("per-op gradients match central finite differences") {
    RngStream rng(101);

    auto check = [&](const char* name, auto build, Tensor a_init, Tensor b_init, double tol) {
        CAPTURE(name);
        ParamStore store;
        store.add("a", a_init);
        const bool binary = !b_init.empty();
        if (binary) store.add("b", b_init);
        auto f = [&](bool grad) {
            Tape tape;
            Var a = tape.leaf(store.at(0));
            Var out = binary ? build(tape, a, tape.leaf(store.at(1))) : build(tape, a, a);
            Var loss = out.value().size() == 1 ? out : sum_all(out);
            if (grad) tape.backward(loss);
            return loss.value()[0];
        };
        GradCheckReport rep = finite_diff_check(store, f, 1e-5);
        CHECK_MESSAGE(rep.pass(tol), name, ": ", rep.summary());
    };

    const Tensor none;
    // linear / bilinear ops at 1e-6 (central differences are exact there)
    check("add", [](Tape&, Var a, Var b) { return add(a, b); }, rand_tensor({3, 4}, rng),
          rand_tensor({3, 4}, rng), 1e-6);
    check("sub", [](Tape&, Var a, Var b) { return sub(a, b); }, rand_tensor({3, 4}, rng),
          rand_tensor({3, 4}, rng), 1e-6);
    check("mul", [](Tape&, Var a, Var b) { return mul(a, b); }, rand_tensor({3, 4}, rng),
          rand_tensor({3, 4}, rng), 1e-6);
    check("matmul", [](Tape&, Var a, Var b) { return matmul(a, b); }, rand_tensor({3, 4}, rng),
          rand_tensor({4, 2}, rng), 1e-6);
    check("dot", [](Tape&, Var a, Var b) { return dot(a, b); }, rand_tensor({5}, rng),
          rand_tensor({5}, rng), 1e-6);
    check("add_rowvec", [](Tape&, Var a, Var b) { return add_rowvec(a, b); },
          rand_tensor({3, 4}, rng), rand_tensor({4}, rng), 1e-6);
    check("mul_rowvec", [](Tape&, Var a, Var b) { return mul_rowvec(a, b); },
          rand_tensor({3, 4}, rng), rand_tensor({4}, rng), 1e-6);
    check("mul_scalar", [](Tape&, Var a, Var b) { return mul_scalar(a, b); },
          rand_tensor({3, 4}, rng), rand_tensor({1}, rng), 1e-6);
    check("scale", [](Tape&, Var a, Var) { return scale(a, -1.37); }, rand_tensor({3, 4}, rng),
          none, 1e-6);
    check("concat", [](Tape&, Var a, Var b) { return concat({a, b}); }, rand_tensor({3}, rng),
          rand_tensor({4}, rng), 1e-6);
    check("stack_rows", [](Tape&, Var a, Var b) { return stack_rows(std::vector<Var>{a, b}); },
          rand_tensor({4}, rng), rand_tensor({4}, rng), 1e-6);
    check("row", [](Tape&, Var a, Var) { return row(a, 1); }, rand_tensor({3, 4}, rng), none, 1e-6);
    check("pick", [](Tape&, Var a, Var) { return pick(a, 2); }, rand_tensor({5}, rng), none, 1e-6);
    check("slice", [](Tape&, Var a, Var) { return slice(a, 1, 3); }, rand_tensor({5}, rng), none,
          1e-6);
    check("sum0", [](Tape&, Var a, Var) { return sum(a, 0); }, rand_tensor({3, 4}, rng), none, 1e-6);
    check("sum1", [](Tape&, Var a, Var) { return sum(a, 1); }, rand_tensor({3, 4}, rng), none, 1e-6);
    check("mean0", [](Tape&, Var a, Var) { return mean(a, 0); }, rand_tensor({3, 4}, rng), none,
          1e-6);
    check("mean1", [](Tape&, Var a, Var) { return mean(a, 1); }, rand_tensor({3, 4}, rng), none,
          1e-6);
    check("reshape", [](Tape&, Var a, Var) { return reshape(a, {4, 3}); }, rand_tensor({3, 4}, rng),
          none, 1e-6);
    check("broadcast_rows", [](Tape&, Var a, Var) { return broadcast_rows(a, 3); },
          rand_tensor({4}, rng), none, 1e-6);
    check("pairwise_diff", [](Tape&, Var a, Var) { return pairwise_diff(a); },
          rand_tensor({3, 4}, rng), none, 1e-6);
    check("abs", [](Tape&, Var a, Var) { return abs(a); }, rand_tensor_away_from_zero({3, 4}, rng),
          none, 1e-6);
    check("relu", [](Tape&, Var a, Var) { return relu(a); },
          rand_tensor_away_from_zero({3, 4}, rng), none, 1e-6);
    check("leaky_relu", [](Tape&, Var a, Var) { return leaky_relu(a); },
          rand_tensor_away_from_zero({3, 4}, rng), none, 1e-6);
    check("clamp_min", [](Tape&, Var a, Var) { return clamp_min(a, -0.5); },
          rand_tensor_away_from_zero({3, 4}, rng), none, 1e-4);
    // dropout-mask-mul: multiplication by a fixed inverted-dropout mask
    {
        RngStream mask_rng(7);
        check("dropout_mask_mul",
              [&mask_rng](Tape& tape, Var a, Var) {
                  RngStream local = mask_rng;  // same mask every call
                  return dropout(a, 0.5, local, true);
              },
              rand_tensor({4, 4}, rng), none, 1e-6);
    }
    // smooth nonlinear ops at 1e-4
    check("exp", [](Tape&, Var a, Var) { return exp(a); }, rand_tensor({3, 4}, rng), none, 1e-4);
    check("log", [](Tape&, Var a, Var) { return log(a); }, rand_tensor({3, 4}, rng, 0.2, 2.0),
          none, 1e-4);
    check("sigmoid", [](Tape&, Var a, Var) { return sigmoid(a); }, rand_tensor({3, 4}, rng), none,
          1e-4);
    check("softmax", [](Tape&, Var a, Var) { return sum_all(mul(softmax(a), a)); },
          rand_tensor({5}, rng), none, 1e-4);
}

TEST_CASE("forward evaluation is bitwise deterministic") {
    auto run = [](std::uint64_t seed) {
        RngStream rng(seed);
        ParamStore store;
        store.add("W", rand_tensor({6, 6}, rng));
        store.add("x", rand_tensor({6}, rng));
        Tape tape;
        Var w = tape.leaf(store.at(0));
        Var x = tape.leaf(store.at(1));
        Var h = leaky_relu(reshape(matmul(w, reshape(x, {6, 1})), {6}));
        Var out = sum_all(mul(softmax(h), exp(scale(h, 0.1))));
        return out.value()[0];
    };
    CHECK(run(5) == run(5));
    CHECK(run(5) != run(6));
}

TEST_CASE("softmax sums to one and is shift invariant") {
    RngStream rng(404);
    for (int t = 0; t < 50; ++t) {
        Tensor z = rand_tensor({7}, rng, -5.0, 5.0);
        Tensor z_shift = z;
        const double c = rng.uniform(-3.0, 3.0);
        for (std::size_t i = 0; i < z_shift.size(); ++i) z_shift[i] += c;
        Tape tape;
        Var p = softmax(tape.input(z));
        Var q = softmax(tape.input(z_shift));
        double sum_p = 0.0;
        for (std::size_t i = 0; i < 7; ++i) sum_p += p.value()[i];
        CHECK(std::fabs(sum_p - 1.0) <= 1e-12);
        for (std::size_t i = 0; i < 7; ++i) {
            CHECK(std::fabs(p.value()[i] - q.value()[i]) <= 1e-12);
        }
    }
}

TEST_CASE("backward is linear: grad of a sum equals sum of grads") {
    RngStream rng(77);
    ParamStore store;
    store.add("W", rand_tensor({4, 4}, rng));
    Tensor x = rand_tensor({4, 1}, rng);

    auto grads_of = [&](int which) {  // 0: l1, 1: l2, 2: l1+l2
        store.zero_grads();
        Tape tape;
        Var w = tape.leaf(store.at(0));
        Var xx = tape.input(x);
        Var l1 = sum_all(matmul(w, xx));
        Var l2 = sum_all(sigmoid(matmul(w, xx)));
        Var loss = which == 0 ? l1 : which == 1 ? l2 : add(l1, l2);
        tape.backward(loss);
        return store.at(0).grad;
    };
    Tensor g1 = grads_of(0);
    Tensor g2 = grads_of(1);
    Tensor g12 = grads_of(2);
    for (std::size_t i = 0; i < g12.size(); ++i) {
        CHECK(std::fabs(g12[i] - (g1[i] + g2[i])) <= 1e-12);
    }
}

TEST_CASE("tensor invariants: finite values and shape agreement enforced") {
    CHECK_THROWS_AS(Tensor::from({2}, {1.0, std::nan("")}), std::runtime_error);
    CHECK_THROWS_AS(Tensor::from({3}, {1.0, 2.0}), ShapeError);
    CHECK_THROWS_AS(Tensor::zeros({0}), ShapeError);
    CHECK_THROWS_AS(Tensor::zeros({2, 2, 2}), ShapeError);
}

TEST_CASE("adam and sgd apply gradient steps") {
    ParamStore store;
    store.add("x", Tensor::scalar(3.0));
    auto loss_grad = [&]() {
        store.zero_grads();
        Tape tape;
        Var x = tape.leaf(store.at(0));
        Var loss = mul(x, x);
        tape.backward(loss);
    };
    AdamOptimizer adam(0.1);
    for (int i = 0; i < 100; ++i) {
        loss_grad();
        adam.step(store);
    }
    CHECK(std::fabs(store.at(0).value[0]) < 0.5);  // reached the basin of x^2

    ParamStore s2;
    s2.add("y", Tensor::scalar(1.0));
    s2.at(0).grad[0] = 2.0;
    sgd_step(s2, 0.25);
    CHECK(s2.at(0).value[0] == 0.5);
}
