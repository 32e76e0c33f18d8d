#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "agg/error.hpp"
#include "agg/finite_diff.hpp"
#include "agg/optim.hpp"
#include "agg/rng.hpp"
#include "agg/tape.hpp"

#include <array>
#include <cmath>
#include <limits>

using namespace agg;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Tensor random_tensor(std::vector<std::int64_t> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (auto& x : t.values()) x = rng.uniform(-scale, scale);
    return t;
}

} // namespace

TEST_CASE("matmul identity and hand oracle") {
    Rng rng(1);
    Tensor m = random_tensor({3, 3}, rng);
    Tensor eye({3, 3});
    for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
    Tensor out = matmul_plain(m, eye);
    for (std::int64_t i = 0; i < 9; ++i) CHECK(out[i] == m[i]);

    // [[1,2],[3,4]] * [[5,6],[7,8]] = [[19,22],[43,50]]
    Tensor a = Tensor::matrix(2, 2, {1, 2, 3, 4});
    Tensor b = Tensor::matrix(2, 2, {5, 6, 7, 8});
    Tensor c = matmul_plain(a, b);
    CHECK(c[0] == 19.0);
    CHECK(c[1] == 22.0);
    CHECK(c[2] == 43.0);
    CHECK(c[3] == 50.0);
}

TEST_CASE("matmul transpose flags agree with explicit transposition") {
    Rng rng(2);
    Tensor a = random_tensor({4, 3}, rng);
    Tensor b = random_tensor({4, 5}, rng);
    Tensor at({3, 4});
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 3; ++j) at.at(j, i) = a.at(i, j);
    Tensor ref = matmul_plain(at, b);
    Tensor got = matmul_plain(a, b, true, false);
    for (std::int64_t i = 0; i < ref.numel(); ++i) CHECK(got[i] == doctest::Approx(ref[i]).epsilon(1e-12));
}

TEST_CASE("matmul shape mismatch names both shapes and the op") {
    Tensor a = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
    Tensor b = Tensor::matrix(2, 2, {1, 2, 3, 4});
    try {
        matmul_plain(a, b);
        FAIL("expected a config error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Config);
        CHECK(std::string(e.what()).find("[2x3]") != std::string::npos);
        CHECK(std::string(e.what()).find("[2x2]") != std::string::npos);
        CHECK(std::string(e.what()).find("matmul") != std::string::npos);
    }
}

TEST_CASE("sin and leaky rectifier fixed points") {
    Tape tape;
    Value x = tape.constant(Tensor::vector({0.0, -1.0, 2.0}));
    CHECK(tape.value(tape.sin(x))[0] == 0.0);
    Value lr = tape.leaky_relu(x, 0.01);
    CHECK(tape.value(lr)[1] == doctest::Approx(-0.01));
    CHECK(tape.value(lr)[2] == 2.0);
}

TEST_CASE("softmax rows: symmetry, shift invariance, scalar oracle") {
    Tape tape;
    Value flat = tape.softmax_rows(tape.constant(Tensor::vector({0.0, 0.0, 0.0})));
    for (int i = 0; i < 3; ++i) CHECK(tape.value(flat)[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    // e^x / sum e^x on [1, 2]
    Value two = tape.softmax_rows(tape.constant(Tensor::vector({1.0, 2.0})));
    CHECK(tape.value(two)[0] == doctest::Approx(0.26894).epsilon(1e-4));
    CHECK(tape.value(two)[1] == doctest::Approx(0.73106).epsilon(1e-4));

    Rng rng(3);
    for (int rep = 0; rep < 20; ++rep) {
        Tensor row = random_tensor({7}, rng, 5.0);
        Tensor shifted = row;
        const double c = rng.uniform(-100.0, 100.0);
        for (auto& x : shifted.values()) x += c;
        Tape t2;
        Value a = t2.softmax_rows(t2.constant(row));
        Value b = t2.softmax_rows(t2.constant(shifted));
        double sum = 0.0;
        for (int i = 0; i < 7; ++i) {
            CHECK(std::abs(t2.value(a)[i] - t2.value(b)[i]) < 1e-12);
            sum += t2.value(a)[i];
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("softmax rows: -inf entries map to exact zero; all -inf row raises") {
    Tape tape;
    Value v = tape.softmax_rows(tape.constant(Tensor::vector({1.0, -kInf, 2.0})));
    CHECK(tape.value(v)[1] == 0.0);
    CHECK(tape.value(v)[0] + tape.value(v)[2] == doctest::Approx(1.0).epsilon(1e-12));

    CHECK_THROWS_AS((void)tape.softmax_rows(tape.constant(Tensor::vector({-kInf, -kInf}))), Error);
}

TEST_CASE("layer_norm zero-variance slice and closed form") {
    Tape tape;
    Value gamma = tape.constant(Tensor::vector({1.0, 1.0}));
    Value beta = tape.constant(Tensor::vector({0.0, 0.0}));

    Value flat = tape.layer_norm(tape.constant(Tensor::vector({5.0, 5.0})), gamma, beta);
    CHECK(std::abs(tape.value(flat)[0]) < 1e-6);
    CHECK(std::abs(tape.value(flat)[1]) < 1e-6);

    const double a = 3.0, eps = 1e-5;
    Value pm = tape.layer_norm(tape.constant(Tensor::vector({-a, a})), gamma, beta, eps);
    const double expect = a / std::sqrt(a * a + eps);
    CHECK(tape.value(pm)[0] == doctest::Approx(-expect).epsilon(1e-9));
    CHECK(tape.value(pm)[1] == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("layer_norm is invariant to additive shifts of its input") {
    Rng rng(4);
    for (int rep = 0; rep < 10; ++rep) {
        Tensor x = random_tensor({4, 6}, rng, 2.0);
        Tensor shifted = x;
        const double c = rng.uniform(-50.0, 50.0);
        for (auto& v : shifted.values()) v += c;
        Tensor gamma = random_tensor({6}, rng);
        Tensor beta = random_tensor({6}, rng);
        Tape tape;
        Value g = tape.constant(gamma);
        Value b = tape.constant(beta);
        Value y0 = tape.layer_norm(tape.constant(x), g, b);
        Value y1 = tape.layer_norm(tape.constant(shifted), g, b);
        for (std::int64_t i = 0; i < 24; ++i) CHECK(std::abs(tape.value(y0)[i] - tape.value(y1)[i]) <= 1e-9);
    }
}

TEST_CASE("dropout identity cases and expectation") {
    Tape tape;
    Rng rng(5);
    Value x = tape.constant(Tensor::vector({1.0, 2.0, 3.0}));
    Value eval_mode = tape.dropout(x, 0.2, &rng, false);
    Value p0 = tape.dropout(x, 0.0, &rng, true);
    for (int i = 0; i < 3; ++i) {
        CHECK(tape.value(eval_mode)[i] == tape.value(x)[i]);
        CHECK(tape.value(p0)[i] == tape.value(x)[i]);
    }
    CHECK_THROWS_AS((void)tape.dropout(x, 1.0, &rng, true), Error);

    // Inverted dropout preserves expectation: mean of 1e5 draws of
    // dropout(1.0, p=0.2) within 0.01 of 1.0 and within 3 standard errors.
    const double p = 0.2;
    const int n = 100000;
    Tape t2;
    Value ones = t2.constant(Tensor({std::int64_t{n}}, std::vector<double>(n, 1.0)));
    Rng drop_rng(6);
    Value dropped = t2.dropout(ones, p, &drop_rng, true);
    double mean = 0.0;
    for (int i = 0; i < n; ++i) mean += t2.value(dropped)[i];
    mean /= n;
    const double se = std::sqrt(p / (1.0 - p) / n);
    CHECK(std::abs(mean - 1.0) < 0.01);
    CHECK(std::abs(mean - 1.0) < 3.0 * se);
}

TEST_CASE("backward: calculus basics") {
    // loss = theta^2 at theta = 3 -> grad 6
    ParameterStore store;
    int theta = store.add("theta", Tensor::scalar(3.0));
    Tape tape(&store);
    Value t = tape.parameter(theta);
    Value loss = tape.mean_all(tape.mul(t, t));
    GradientBuffer grads(store);
    tape.backward(loss, grads);
    CHECK(grads.grad(theta)[0] == doctest::Approx(6.0).epsilon(1e-12));

    // constant loss -> zero grad for a non-participating parameter
    ParameterStore store2;
    int unused = store2.add("unused", Tensor::vector({1.0, 2.0}));
    Tape tape2(&store2);
    Value c = tape2.constant(Tensor::scalar(7.0));
    GradientBuffer grads2(store2);
    tape2.backward(tape2.mean_all(c), grads2);
    CHECK(grads2.grad(unused)[0] == 0.0);
    CHECK(grads2.grad(unused)[1] == 0.0);
}

TEST_CASE("backward rejects non-finite loss with a divergence error") {
    Tape tape;
    Value bad = tape.constant(Tensor::scalar(std::numeric_limits<double>::quiet_NaN()));
    ParameterStore store;
    GradientBuffer grads(store);
    try {
        tape.backward(bad, grads);
        FAIL("expected divergence");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Divergence);
    }
}

TEST_CASE("finite_diff_check: analytic oracles") {
    // f(theta) = sum(sin(theta)): d/dtheta = cos(theta), error < 1e-7
    ParameterStore store;
    Rng rng(7);
    int theta = store.add("theta", random_tensor({5}, rng, 2.0));
    auto build = [&](Tape& tape) { return tape.sum_all(tape.sin(tape.parameter(theta))); };
    auto report = finite_diff_check(store, build);
    CHECK(report.max_rel_error < 1e-7);

    // constant function -> error exactly 0
    ParameterStore store2;
    int unused = store2.add("theta", Tensor::vector({1.0, 2.0}));
    (void)unused;
    auto const_build = [&](Tape& tape) { return tape.constant(Tensor::scalar(4.2)); };
    CHECK(finite_diff_check(store2, const_build).max_rel_error == 0.0);
}

TEST_CASE("backward of a random 3-layer composite matches finite differences") {
    Rng rng(8);
    ParameterStore store;
    int w1 = store.add("w1", random_tensor({4, 6}, rng));
    int b1 = store.add("b1", random_tensor({6}, rng));
    int w2 = store.add("w2", random_tensor({6, 5}, rng));
    int gamma = store.add("gamma", random_tensor({5}, rng));
    int beta = store.add("beta", random_tensor({5}, rng));
    int w3 = store.add("w3", random_tensor({5, 2}, rng));
    Tensor input = random_tensor({3, 4}, rng);

    auto build = [&](Tape& tape) {
        Value x = tape.constant(input);
        Value h = tape.leaky_relu(tape.add(tape.matmul(x, tape.parameter(w1)), tape.parameter(b1)), 0.01);
        Value n = tape.layer_norm(tape.matmul(h, tape.parameter(w2)), tape.parameter(gamma), tape.parameter(beta));
        Value out = tape.matmul(tape.softmax_rows(n), tape.parameter(w3));
        return tape.mean_all(tape.mul(out, out));
    };
    CHECK(finite_diff_check(store, build).max_rel_error < 1e-4);
}

TEST_CASE("every differentiable primitive passes a finite-difference check over random shapes") {
    Rng rng(9);
    for (int rep = 0; rep < 5; ++rep) {
        const std::int64_t r = 2 + rng.uniform_int(3);
        const std::int64_t c = 2 + rng.uniform_int(3);
        const std::int64_t k = 2 + rng.uniform_int(3);
        ParameterStore store;
        int a = store.add("a", random_tensor({r, k}, rng));
        int b = store.add("b", random_tensor({k, c}, rng));
        int v = store.add("v", random_tensor({c}, rng));
        int s = store.add("s", Tensor::scalar(rng.uniform(0.5, 1.5)));
        int g = store.add("gamma", random_tensor({c}, rng));
        int be = store.add("beta", random_tensor({c}, rng));
        int table = store.add("table", random_tensor({4, c}, rng));

        auto build = [&](Tape& tape) {
            Value m = tape.matmul(tape.parameter(a), tape.parameter(b));          // matmul
            Value biased = tape.add(m, tape.parameter(v));                        // row broadcast add
            Value scaled = tape.mul(biased, tape.parameter(s));                   // scalar broadcast mul
            Value act = tape.leaky_relu(tape.sin(scaled), 0.01);                  // sin, leaky
            Value ln = tape.layer_norm(act, tape.parameter(g), tape.parameter(be)); // layer norm
            Value sm = tape.softmax_rows(ln);                                     // softmax
            Value row = tape.gather_row(tape.parameter(table), 2);                // gather
            Value joined = tape.concat_last(std::array<Value, 2>{sm, sm});        // concat
            Value sl = tape.slice_last(joined, 1, c);                             // slice
            Value prod = tape.mul(sl, sl);                                        // elementwise mul
            Value sig = tape.sigmoid(tape.sub(tape.mean_all(prod), tape.mean_all(row)));
            return tape.bce(sig, 1.0);                                            // bce
        };
        CHECK(finite_diff_check(store, build).max_rel_error < 1e-4);
    }
}

TEST_CASE("gather_row: gradient flows only to the selected row") {
    Rng rng(10);
    ParameterStore store;
    int table = store.add("table", random_tensor({3, 4}, rng));
    Tape tape(&store);
    Value row = tape.gather_row(tape.parameter(table), 1);
    GradientBuffer grads(store);
    tape.backward(tape.mean_all(tape.mul(row, row)), grads);
    for (int c = 0; c < 4; ++c) {
        CHECK(grads.grad(table)[0 * 4 + c] == 0.0);
        CHECK(grads.grad(table)[1 * 4 + c] != 0.0);
        CHECK(grads.grad(table)[2 * 4 + c] == 0.0);
    }
    CHECK_THROWS_AS((void)tape.gather_row(tape.parameter(table), 3), Error);
}

TEST_CASE("identity-table gather returns the unit row") {
    ParameterStore store;
    Tensor eye({3, 3});
    for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
    int table = store.add("eye", eye);
    Tape tape(&store);
    Value row = tape.gather_row(tape.parameter(table), 1);
    CHECK(tape.value(row)[0] == 0.0);
    CHECK(tape.value(row)[1] == 1.0);
    CHECK(tape.value(row)[2] == 0.0);
}

TEST_CASE("adam: zero gradients leave fresh parameters unchanged bitwise") {
    Rng rng(11);
    ParameterStore store;
    int w = store.add("w", random_tensor({3, 3}, rng));
    Tensor before = store.value(w);
    AdamState state = AdamState::init(store);
    GradientBuffer grads(store);
    adam_step(store, grads, state, 0.005);
    for (std::int64_t i = 0; i < 9; ++i) CHECK(store.value(w)[i] == before[i]);
    CHECK(state.t == 1);
}

TEST_CASE("adam: first-step magnitude approximately lr") {
    ParameterStore store;
    int w = store.add("w", Tensor::scalar(1.0));
    AdamState state = AdamState::init(store);
    GradientBuffer grads(store);
    grads.accumulate(w, Tensor::scalar(0.37));
    const double lr = 0.005;
    adam_step(store, grads, state, lr);
    // bias-corrected first step: |delta| = lr * |g| / (|g| + eps') ~ lr
    CHECK(std::abs(1.0 - store.value(w)[0]) == doctest::Approx(lr).epsilon(1e-6));
}

TEST_CASE("adam rejects non-finite gradients") {
    ParameterStore store;
    int w = store.add("w", Tensor::scalar(1.0));
    AdamState state = AdamState::init(store);
    GradientBuffer grads(store);
    grads.accumulate(w, Tensor::scalar(std::numeric_limits<double>::infinity()));
    CHECK_THROWS_AS(adam_step(store, grads, state, 0.01), Error);
}

TEST_CASE("adam determinism: identical seeds give bitwise-identical parameters") {
    auto run = [](std::uint64_t seed) {
        Rng rng(seed);
        ParameterStore store;
        int w = store.add("w", random_tensor({4, 4}, rng));
        AdamState state = AdamState::init(store);
        for (int step = 0; step < 25; ++step) {
            GradientBuffer grads(store);
            Tape tape(&store);
            Value p = tape.parameter(w);
            Value loss = tape.mean_all(tape.mul(tape.sin(p), p));
            tape.backward(loss, grads);
            adam_step(store, grads, state, 0.01);
        }
        return store.value(w).values();
    };
    auto a = run(42);
    auto b = run(42);
    CHECK(a == b);
}

TEST_CASE("clip_global_norm") {
    ParameterStore store;
    int w = store.add("w", Tensor::vector({0.0, 0.0}));

    GradientBuffer small(store);
    small.accumulate(w, Tensor::vector({0.3, 0.4})); // norm 0.5
    clip_global_norm(small, 1.0);
    CHECK(small.grad(w)[0] == 0.3);
    CHECK(small.grad(w)[1] == 0.4);

    GradientBuffer big(store);
    big.accumulate(w, Tensor::vector({0.0, 4.0})); // norm 4
    clip_global_norm(big, 1.0);
    CHECK(big.grad(w)[1] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(big.global_norm() == doctest::Approx(1.0).epsilon(1e-9));

    GradientBuffer zero(store);
    clip_global_norm(zero, 1.0);
    CHECK(zero.grad(w)[0] == 0.0);
}

TEST_CASE("rng: identical seeds and draw sequences give identical outputs") {
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng c = Rng::derive(9, 1, 2);
    Rng d = Rng::derive(9, 1, 2);
    CHECK(c.uniform() == d.uniform());
    CHECK(Rng::derive(9, 1, 2).next_u64() != Rng::derive(9, 2, 1).next_u64());
}
