#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <string>

#include "doctest.h"
#include "oracles.hpp"
#include "sad/adam.hpp"
#include "sad/checkpoint.hpp"
#include "sad/rng.hpp"
#include "sad/tape.hpp"
#include "sad/tensor.hpp"

using namespace sad;

namespace {

Tensor random_tensor(std::vector<size_t> shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
    Tensor t(std::move(shape));
    for (size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// FD check of scalar = f(x) over every coordinate of x at one random point.
void fd_check(const std::function<Var(Tape&, Var)>& build, std::vector<size_t> shape, Rng& rng, double lo = -2.0,
              double hi = 2.0) {
    Tensor x = random_tensor(shape, rng, lo, hi);
    std::vector<double> flat(x.data(), x.data() + x.size());
    auto eval = [&]() {
        Tape t;
        Var leaf = t.leaf(Tensor(shape, flat));
        return t.value(build(t, leaf)).item();
    };
    Tape tape;
    Var leaf = tape.leaf(Tensor(shape, flat));
    Var loss = build(tape, leaf);
    tape.backward(loss);
    const Tensor g = tape.grad(leaf);
    for (size_t i = 0; i < flat.size(); ++i) {
        const double fd = oracles::central_diff(eval, flat[i]);
        CAPTURE(i);
        CHECK(oracles::rel_err(g[i], fd) < 1e-4);
    }
}

}  // namespace

TEST_CASE("tensor construction and validation") {
    Tensor t({2, 3});
    CHECK(t.size() == 6);
    CHECK(t.shape_str() == "[2,3]");
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), std::invalid_argument);
    CHECK_THROWS_AS(Tensor({2}, {1.0, std::nan("")}), std::invalid_argument);
    CHECK_THROWS_AS(Tensor({0, 3}), std::invalid_argument);
    CHECK(Tensor::scalar(4.0).item() == 4.0);
}

TEST_CASE("matmul kernels match the serial reference exactly") {
    Rng rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        const size_t m = 1 + rng.below(70), k = 1 + rng.below(70), n = 1 + rng.below(70);
        Tensor a = random_tensor({m, k}, rng), b = random_tensor({k, n}, rng);
        Tensor c1({m, n}), c2({m, n});
        kernels::matmul_serial(a.data(), b.data(), c1.data(), m, k, n);
        kernels::matmul(a.data(), b.data(), c2.data(), m, k, n);
        for (size_t i = 0; i < c1.size(); ++i) REQUIRE(c1[i] == c2[i]);

        Tensor bt = random_tensor({n, k}, rng);
        Tensor d1({m, n}), d2({m, n});
        kernels::matmul_nt_serial(a.data(), bt.data(), d1.data(), m, k, n);
        kernels::matmul_nt(a.data(), bt.data(), d2.data(), m, k, n);
        for (size_t i = 0; i < d1.size(); ++i) REQUIRE(d1[i] == d2[i]);

        Tensor e = random_tensor({m, n}, rng);
        Tensor f1({k, n}), f2({k, n});
        kernels::matmul_tn_serial(a.data(), e.data(), f1.data(), m, k, n);
        kernels::matmul_tn(a.data(), e.data(), f2.data(), m, k, n);
        for (size_t i = 0; i < f1.size(); ++i) REQUIRE(f1[i] == f2[i]);
    }
    // above the parallel cutoff
    Rng rng2(8);
    const size_t m = 150, k = 80, n = 90;
    Tensor a = random_tensor({m, k}, rng2), b = random_tensor({k, n}, rng2);
    Tensor c1({m, n}), c2({m, n});
    kernels::matmul_serial(a.data(), b.data(), c1.data(), m, k, n);
    kernels::matmul(a.data(), b.data(), c2.data(), m, k, n);
    for (size_t i = 0; i < c1.size(); ++i) REQUIRE(c1[i] == c2[i]);
}

TEST_CASE("forward primitives: pinned values") {
    Tape t;
    SUBCASE("relu") {
        Var y = t.relu(t.constant(Tensor({3}, {-1.0, 0.0, 2.0})));
        CHECK(t.value(y)[0] == 0.0);
        CHECK(t.value(y)[1] == 0.0);
        CHECK(t.value(y)[2] == 2.0);
    }
    SUBCASE("softmax symmetry") {
        Var y = t.softmax_rows(t.constant(Tensor({1, 2}, {0.0, 0.0})));
        CHECK(t.value(y)[0] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(t.value(y)[1] == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("matmul of ones") {
        Var y = t.matmul(t.constant(Tensor::full({2, 3}, 1.0)), t.constant(Tensor::full({3, 1}, 1.0)));
        CHECK(t.value(y).shape() == std::vector<size_t>{2, 1});
        CHECK(t.value(y)[0] == 3.0);
        CHECK(t.value(y)[1] == 3.0);
    }
}

TEST_CASE("shape mismatch diagnostics name both shapes") {
    Tape t;
    Var a = t.constant(Tensor({2, 3}));
    Var b = t.constant(Tensor({4, 1}));
    try {
        t.matmul(a, b);
        FAIL("expected rejection");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2,3]") != std::string::npos);
        CHECK(msg.find("[4,1]") != std::string::npos);
    }
    CHECK_THROWS_AS(t.add(a, b), std::invalid_argument);
}

TEST_CASE("non-finite inputs are rejected") {
    Tape t;
    std::vector<double> data{1.0, 2.0};
    Tensor ok({2}, data);
    Var a = t.constant(ok);
    CHECK_THROWS_AS(t.leaf(Tensor({1}, {1.0 / 0.0})), std::invalid_argument);
    (void)a;
}

TEST_CASE("backward: pinned examples") {
    SUBCASE("d(x*x)/dx at 3 is 6") {
        Tape t;
        Var x = t.leaf(Tensor::scalar(3.0));
        Var y = t.mul(x, x);
        t.backward(y);
        CHECK(t.grad(x)[0] == doctest::Approx(6.0).epsilon(1e-12));
    }
    SUBCASE("inactive relu has zero gradient") {
        Tape t;
        Var x = t.leaf(Tensor::scalar(-1.0));
        Var y = t.relu(x);
        t.backward(y);
        CHECK(t.grad(x)[0] == 0.0);
    }
    SUBCASE("non-scalar loss rejected") {
        Tape t;
        Var x = t.leaf(Tensor({2}, {1.0, 2.0}));
        CHECK_THROWS_AS(t.backward(x), std::invalid_argument);
    }
    SUBCASE("parameters off the loss path get zero gradient") {
        Tape t;
        Var x = t.leaf(Tensor::scalar(2.0));
        Var unused = t.leaf(Tensor({3}, {1.0, 2.0, 3.0}));
        Var y = t.mul(x, x);
        t.backward(y);
        const Tensor g = t.grad(unused);
        for (size_t i = 0; i < g.size(); ++i) CHECK(g[i] == 0.0);
    }
}

TEST_CASE("every differentiable primitive passes finite-difference checks at 20 random points") {
    Rng rng(42);
    for (int point = 0; point < 20; ++point) {
        // unary elementwise ops, then a reduction to scalar
        fd_check([](Tape& t, Var x) { return t.sum(t.relu(x)); }, {3, 4}, rng);
        fd_check([](Tape& t, Var x) { return t.sum(t.exp(x)); }, {2, 3}, rng);
        fd_check([](Tape& t, Var x) { return t.sum(t.log(x)); }, {2, 3}, rng, 0.2, 3.0);
        fd_check([](Tape& t, Var x) { return t.sum(t.cos(x)); }, {2, 3}, rng);
        fd_check([](Tape& t, Var x) { return t.sum(t.abs(x)); }, {2, 3}, rng);
        fd_check([](Tape& t, Var x) { return t.mean(x); }, {5}, rng);
        fd_check([](Tape& t, Var x) { return t.sum(t.affine(x, 1.7, -0.3)); }, {4}, rng);
        fd_check([](Tape& t, Var x) { return t.sum(t.softmax_rows(x)); }, {2, 4}, rng);
        fd_check([](Tape& t, Var x) { return t.sum(t.l2_normalize_rows(x)); }, {2, 4}, rng);
        fd_check([](Tape& t, Var x) { return t.sum(t.logsumexp_rows(x)); }, {3, 4}, rng);
        fd_check(
            [](Tape& t, Var x) {
                Var w = t.constant(Tensor({2, 2}, {0.3, -0.7, 1.1, 0.4}));
                return t.sum(t.matmul(x, w));
            },
            {3, 2}, rng);
        fd_check(
            [](Tape& t, Var x) {
                Var w = t.constant(Tensor({2, 2}, {0.5, -0.2, 0.8, 1.3}));
                return t.sum(t.matmul_nt(x, w));
            },
            {3, 2}, rng);
        fd_check(
            [](Tape& t, Var x) {
                Var row = t.slice_rows(x, 1, 2);
                return t.sum(t.mul(row, row));
            },
            {4, 3}, rng);
        fd_check(
            [](Tape& t, Var x) {
                Var g = t.gather_rows(x, {2, 0, -1, 2});
                return t.sum(t.mul(g, g));
            },
            {3, 2}, rng);
        fd_check(
            [](Tape& t, Var x) {
                Var parts = t.concat_cols({x, t.relu(x)});
                return t.sum(t.mul(parts, parts));
            },
            {2, 3}, rng);
        fd_check(
            [](Tape& t, Var x) {
                Var stacked = t.concat_rows({x, t.scale(x, 0.5)});
                return t.sum(t.exp(t.scale(stacked, 0.3)));
            },
            {2, 3}, rng);
        fd_check(
            [](Tape& t, Var x) {
                Var bias = t.slice_rows(x, 0, 1);
                Var mat = t.slice_rows(x, 1, 3);
                return t.sum(t.relu(t.add_rowwise(mat, bias)));
            },
            {4, 3}, rng);
        fd_check(
            [](Tape& t, Var x) {
                Tensor w({2, 3});
                for (size_t i = 0; i < w.size(); ++i) w[i] = 0.1 * static_cast<double>(i) - 0.2;
                return t.inner_const(x, std::move(w));
            },
            {2, 3}, rng);
        // attention_pool: x packs q (2 rows), k (3 rows), v (3 rows) of width 2
        fd_check(
            [](Tape& t, Var x) {
                Var q = t.slice_rows(x, 0, 2);
                Var k = t.slice_rows(x, 2, 3);
                Var v = t.slice_rows(x, 5, 3);
                Var out = t.attention_pool(q, k, v, {{0, 2}, {1, 2}}, 0.7);
                return t.sum(t.mul(out, out));
            },
            {8, 2}, rng);
        fd_check([](Tape& t, Var x) { return t.softmax_xent(x, {1, -1, 0}); }, {3, 2}, rng);
        // x packs omega (row 0) and phase (row 1)
        fd_check(
            [](Tape& t, Var x) {
                Var omega = t.slice_rows(x, 0, 1);
                Var phase = t.slice_rows(x, 1, 1);
                Var enc = t.cosine_features({0.0, 0.7, 2.3}, omega, phase);
                return t.sum(t.mul(enc, enc));
            },
            {2, 4}, rng);
    }
}

TEST_CASE("backward is linear: grad of a sum equals the sum of grads") {
    Rng rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor x0 = random_tensor({3, 2}, rng);
        auto f = [](Tape& t, Var x) { return t.sum(t.relu(t.matmul_nt(x, x))); };
        auto g = [](Tape& t, Var x) { return t.mean(t.cos(x)); };
        Tape t1;
        Var x1 = t1.leaf(x0);
        t1.backward(t1.add(f(t1, x1), g(t1, x1)));
        Tape t2;
        Var x2 = t2.leaf(x0);
        t2.backward(f(t2, x2));
        Tape t3;
        Var x3 = t3.leaf(x0);
        t3.backward(g(t3, x3));
        const Tensor gs = t1.grad(x1), gf = t2.grad(x2), gg = t3.grad(x3);
        for (size_t i = 0; i < gs.size(); ++i) CHECK(gs[i] == doctest::Approx(gf[i] + gg[i]).epsilon(1e-12));
    }
}

TEST_CASE("guarded ops stay finite on boundary inputs") {
    Tape t;
    Var x = t.constant(Tensor({3}, {0.0, 1e-30, 5.0}));
    const Tensor y = t.value(t.log(x));
    for (size_t i = 0; i < y.size(); ++i) CHECK(std::isfinite(y[i]));
    CHECK(y[0] == doctest::Approx(std::log(1e-12)));
    Var big = t.constant(Tensor({1, 2}, {600.0, 601.0}));
    const Tensor sm = t.value(t.softmax_rows(big));
    CHECK(std::isfinite(sm[0]));
    const Tensor lse = t.value(t.logsumexp_rows(big));
    CHECK(std::isfinite(lse[0]));
    const Tensor nz = t.value(t.l2_normalize_rows(t.constant(Tensor({1, 2}))));
    CHECK(std::isfinite(nz[0]));
}

TEST_CASE("adam: pinned update behavior") {
    SUBCASE("all-zero gradient leaves parameters unchanged") {
        std::vector<Parameter> params{{"w", Tensor({2, 2}, {1.0, -2.0, 3.0, 4.0})}};
        const Tensor before = params[0].value;
        AdamState adam;
        adam.step(params, {Tensor({2, 2})}, 0.1);
        for (size_t i = 0; i < before.size(); ++i) CHECK(params[0].value[i] == before[i]);
    }
    SUBCASE("bias-corrected first step moves by about lr") {
        std::vector<Parameter> params{{"w", Tensor::scalar(1.0)}};
        AdamState adam;
        adam.step(params, {Tensor::scalar(1.0)}, 0.1);
        CHECK(params[0].value[0] == doctest::Approx(0.9).epsilon(1e-6));
    }
    SUBCASE("step counter is monotone") {
        std::vector<Parameter> params{{"w", Tensor::scalar(1.0)}};
        AdamState adam;
        adam.step(params, {Tensor::scalar(0.5)}, 0.01);
        adam.step(params, {Tensor::scalar(0.5)}, 0.01);
        CHECK(adam.steps() == 2);
    }
    SUBCASE("shape mismatch rejected") {
        std::vector<Parameter> params{{"w", Tensor({2})}};
        AdamState adam;
        CHECK_THROWS_AS(adam.step(params, {Tensor({3})}, 0.01), std::invalid_argument);
    }
}

TEST_CASE("checkpoint round-trips bit-exactly") {
    Rng rng(5);
    std::vector<Parameter> params;
    params.push_back({"encoder.layer0.head0.Wq", random_tensor({4, 3}, rng)});
    params.push_back({"detector.b2", random_tensor({1, 1}, rng)});
    const std::string path = "ckpt_roundtrip.bin";
    save_checkpoint(path, params);
    const std::vector<Parameter> loaded = load_checkpoint(path);
    REQUIRE(loaded.size() == params.size());
    for (size_t p = 0; p < params.size(); ++p) {
        CHECK(loaded[p].name == params[p].name);
        REQUIRE(loaded[p].value.shape() == params[p].value.shape());
        for (size_t i = 0; i < params[p].value.size(); ++i) CHECK(loaded[p].value[i] == params[p].value[i]);
    }
    CHECK_THROWS(load_checkpoint("no_such_file.bin"));
}
