#include "supcon/tensor.hpp"

#include <cmath>
#include <random>

#include "doctest.h"

using supcon::GradTape;
using supcon::Tensor;
using supcon::ValueId;

namespace {

Tensor<double> random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng,
                             double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor<double> t = Tensor<double>::zeros(std::move(shape));
    for (double& v : t.data) v = dist(rng);
    return t;
}

// Reduces an arbitrary output to a scalar via a fixed random linear
// functional so every op can be grad-checked through the same harness.
// The weights must stay constant across grad_check's probe evaluations.
Tensor<double> probe_weights(const std::vector<std::size_t>& shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return random_tensor(shape, rng, 0.25, 1.0);
}

ValueId scalarize(GradTape<double>& tape, ValueId v, std::uint64_t seed = 17) {
    return tape.inner(v, probe_weights(tape.value(v).shape, seed));
}

}  // namespace

TEST_CASE("matmul forward examples") {
    GradTape<float> tape;
    ValueId eye = tape.leaf(Tensor<float>({2, 2}, {1, 0, 0, 1}), false);
    ValueId m = tape.leaf(Tensor<float>({2, 2}, {5, 6, 7, 8}), false);
    ValueId out = tape.matmul(eye, m);
    CHECK(tape.value(out).data == std::vector<float>{5, 6, 7, 8});

    ValueId a = tape.leaf(Tensor<float>({1, 2}, {1, 2}), false);
    ValueId b = tape.leaf(Tensor<float>({2, 1}, {3, 4}), false);
    CHECK(tape.value(tape.matmul(a, b)).data[0] == doctest::Approx(11.0f));

    CHECK_THROWS_AS(tape.matmul(b, m), supcon::ValidationError);
}

TEST_CASE("matmul associates with the identity") {
    std::mt19937_64 rng(19);
    Tensor<double> a = random_tensor({3, 3}, rng);
    Tensor<double> b = random_tensor({3, 2}, rng);
    Tensor<double> eye = Tensor<double>::zeros({3, 3});
    for (std::size_t i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
    GradTape<double> tape;
    ValueId va = tape.leaf(a, false), vb = tape.leaf(b, false), vi = tape.leaf(eye, false);
    const auto left = tape.value(tape.matmul(tape.matmul(va, vi), vb)).data;
    const auto right = tape.value(tape.matmul(va, tape.matmul(vi, vb))).data;
    const auto plain = tape.value(tape.matmul(va, vb)).data;
    for (std::size_t i = 0; i < plain.size(); ++i) {
        CHECK(std::abs(left[i] - plain[i]) <= 1e-12);
        CHECK(std::abs(right[i] - plain[i]) <= 1e-12);
    }
}

TEST_CASE("matmul gradient vs finite differences") {
    std::mt19937_64 rng(7);
    Tensor<double> a = random_tensor({4, 3}, rng);
    Tensor<double> b = random_tensor({3, 2}, rng);
    auto through_a = [&](GradTape<double>& t, ValueId x) {
        ValueId bb = t.leaf(b, false);
        return scalarize(t, t.matmul(x, bb));
    };
    auto through_b = [&](GradTape<double>& t, ValueId x) {
        ValueId aa = t.leaf(a, false);
        return scalarize(t, t.matmul(aa, x));
    };
    CHECK(supcon::grad_check<double>(through_a, a, 1e-6) <= 1e-5);
    CHECK(supcon::grad_check<double>(through_b, b, 1e-6) <= 1e-5);
}

TEST_CASE("conv2d counts overlap on all-ones input") {
    GradTape<float> tape;
    ValueId x = tape.leaf(Tensor<float>::full({1, 1, 3, 3}, 1.0f), false);
    ValueId k = tape.leaf(Tensor<float>::full({1, 1, 3, 3}, 1.0f), false);
    const Tensor<float>& out = tape.value(tape.conv2d(x, k, 1));
    REQUIRE(out.shape == std::vector<std::size_t>{1, 1, 3, 3});
    CHECK(out.at(0, 0, 1, 1) == doctest::Approx(9.0f));
    CHECK(out.at(0, 0, 0, 0) == doctest::Approx(4.0f));
    CHECK(out.at(0, 0, 2, 2) == doctest::Approx(4.0f));
    CHECK(out.at(0, 0, 0, 1) == doctest::Approx(6.0f));

    ValueId zk = tape.leaf(Tensor<float>::zeros({1, 1, 3, 3}), false);
    for (float v : tape.value(tape.conv2d(x, zk, 1)).data) CHECK(v == 0.0f);
}

TEST_CASE("conv2d zero kernel gets zero kernel-gradient from zero upstream") {
    GradTape<double> tape;
    ValueId x = tape.leaf(Tensor<double>::full({1, 1, 4, 4}, 0.5), false);
    ValueId k = tape.leaf(Tensor<double>::zeros({1, 1, 3, 3}), true);
    ValueId y = tape.conv2d(x, k, 1);
    // All outputs are zero, so an inner with zero weights keeps upstream zero.
    ValueId loss = tape.inner(y, tape.value(y));
    tape.backward(loss);
    for (double v : tape.grad(k).data) CHECK(v == 0.0);
}

TEST_CASE("conv2d gradients vs finite differences, both strides") {
    std::mt19937_64 rng(11);
    for (int stride : {1, 2}) {
        Tensor<double> x = random_tensor({2, 3, 8, 8}, rng);
        Tensor<double> k = random_tensor({4, 3, 3, 3}, rng);
        auto through_x = [&](GradTape<double>& t, ValueId in) {
            ValueId kk = t.leaf(k, false);
            return scalarize(t, t.conv2d(in, kk, stride));
        };
        auto through_k = [&](GradTape<double>& t, ValueId in) {
            ValueId xx = t.leaf(x, false);
            return scalarize(t, t.conv2d(xx, in, stride));
        };
        CHECK(supcon::grad_check<double>(through_x, x, 1e-6) <= 1e-5);
        CHECK(supcon::grad_check<double>(through_k, k, 1e-6) <= 1e-5);
    }
}

TEST_CASE("conv2d validation errors") {
    GradTape<float> tape;
    ValueId x = tape.leaf(Tensor<float>::zeros({1, 2, 4, 4}), false);
    ValueId k = tape.leaf(Tensor<float>::zeros({1, 3, 3, 3}), false);
    CHECK_THROWS_AS(tape.conv2d(x, k, 1), supcon::ValidationError);  // channel mismatch
    ValueId k2 = tape.leaf(Tensor<float>::zeros({1, 2, 3, 3}), false);
    CHECK_THROWS_AS(tape.conv2d(x, k2, 3), supcon::ValidationError);  // bad stride
}

TEST_CASE("relu value and subgradient") {
    GradTape<double> tape;
    ValueId x = tape.leaf(Tensor<double>({2}, {1.0, -2.0}), true);
    ValueId y = tape.relu(x);
    CHECK(tape.value(y).data == std::vector<double>{1.0, 0.0});
    ValueId s = tape.inner(y, Tensor<double>::full({2}, 1.0));
    tape.backward(s);
    CHECK(tape.grad(x).data == std::vector<double>{1.0, 0.0});
}

TEST_CASE("relu subgradient at exactly zero is zero") {
    GradTape<double> tape;
    ValueId x = tape.leaf(Tensor<double>({1}, {0.0}), true);
    ValueId s = tape.inner(tape.relu(x), Tensor<double>::full({1}, 1.0));
    tape.backward(s);
    CHECK(tape.grad(x).data[0] == 0.0);
}

TEST_CASE("global_avg_pool example") {
    GradTape<float> tape;
    ValueId x = tape.leaf(Tensor<float>({1, 1, 2, 2}, {1, 2, 3, 4}), false);
    CHECK(tape.value(tape.global_avg_pool(x)).data[0] == doctest::Approx(2.5f));
}

TEST_CASE("dense example") {
    GradTape<float> tape;
    ValueId x = tape.leaf(Tensor<float>({1, 2}, {1, 1}), false);
    ValueId w = tape.leaf(Tensor<float>({2, 2}, {2, 0, 0, 3}), false);
    ValueId b = tape.leaf(Tensor<float>({2}, {1, 1}), false);
    const Tensor<float>& y = tape.value(tape.dense(x, w, b));
    CHECK(y.data == std::vector<float>{3, 4});
}

TEST_CASE("l2_normalize examples") {
    GradTape<double> tape;
    ValueId v = tape.leaf(Tensor<double>({2}, {3, 4}), false);
    const Tensor<double>& y = tape.value(tape.l2_normalize_rows(v));
    CHECK(y.data[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(y.data[1] == doctest::Approx(0.8).epsilon(1e-12));

    ValueId unit = tape.leaf(Tensor<double>({2}, {1.0, 0.0}), false);
    CHECK(tape.value(tape.l2_normalize_rows(unit)).data == std::vector<double>{1.0, 0.0});

    ValueId tiny = tape.leaf(Tensor<double>({2}, {1e-13, 0.0}), false);
    CHECK_THROWS_AS(tape.l2_normalize_rows(tiny), supcon::ValidationError);
}

TEST_CASE("l2_normalize is scale invariant") {
    std::mt19937_64 rng(3);
    Tensor<double> v = random_tensor({6}, rng);
    Tensor<double> scaled = v;
    for (double& x : scaled.data) x *= 7.0;
    GradTape<double> tape;
    const Tensor<double>& a = tape.value(tape.l2_normalize_rows(tape.leaf(v, false)));
    const Tensor<double>& b = tape.value(tape.l2_normalize_rows(tape.leaf(scaled, false)));
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(std::abs(a.data[i] - b.data[i]) <= 1e-12);
}

TEST_CASE("log_sum_exp values") {
    GradTape<double> tape;
    ValueId v = tape.leaf(Tensor<double>({3}, {0, 0, 0}), false);
    CHECK(tape.value(tape.log_sum_exp(v)).data[0] == doctest::Approx(std::log(3.0)).epsilon(1e-12));

    ValueId big = tape.leaf(Tensor<double>({2}, {1000, 0}), false);
    CHECK(tape.value(tape.log_sum_exp(big)).data[0] == 1000.0);

    ValueId huge = tape.leaf(Tensor<double>({3}, {700, 700, 700}), false);
    CHECK(tape.value(tape.log_sum_exp(huge)).data[0] ==
          doctest::Approx(700.0 + std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("log_sum_exp matches naive oracle on small values") {
    std::mt19937_64 rng(5);
    for (int it = 0; it < 100; ++it) {
        Tensor<double> v = random_tensor({7}, rng, -3.0, 3.0);
        double naive = 0;
        for (double x : v.data) naive += std::exp(x);
        naive = std::log(naive);
        GradTape<double> tape;
        double got = tape.value(tape.log_sum_exp(tape.leaf(v, false))).data[0];
        CHECK(std::abs(got - naive) <= 1e-12);
    }
}

TEST_CASE("log_sum_exp shift identity") {
    std::mt19937_64 rng(6);
    for (int it = 0; it < 50; ++it) {
        Tensor<double> v = random_tensor({5}, rng, -2.0, 2.0);
        std::uniform_real_distribution<double> cdist(-50.0, 50.0);
        const double c = cdist(rng);
        Tensor<double> shifted = v;
        for (double& x : shifted.data) x += c;
        GradTape<double> tape;
        double base = tape.value(tape.log_sum_exp(tape.leaf(v, false))).data[0];
        double moved = tape.value(tape.log_sum_exp(tape.leaf(shifted, false))).data[0];
        CHECK(std::abs(moved - (base + c)) <= 1e-12);
    }
}

TEST_CASE("grad_check on sum of squares is essentially exact") {
    Tensor<double> x({1, 3}, {1, 2, 3});
    // Sum of squares as x·xᵀ; the leaf feeds both matmul_nt arguments.
    auto f = [](GradTape<double>& t, ValueId in) { return t.matmul_nt(in, in); };
    {
        GradTape<double> tape;
        ValueId in = tape.leaf(x, true);
        ValueId out = f(tape, in);
        CHECK(tape.value(out).data[0] == doctest::Approx(14.0).epsilon(1e-14));
        tape.backward(out);
        CHECK(tape.grad(in).data == std::vector<double>{2, 4, 6});
    }
    CHECK(supcon::grad_check<double>(f, x, 1e-6) <= 1e-8);
}

TEST_CASE("every differentiable op passes finite differences on random inputs") {
    std::mt19937_64 rng(42);
    std::uniform_int_distribution<std::size_t> dim(1, 5);
    int checked = 0;
    for (int it = 0; it < 20; ++it) {
        const std::size_t m = dim(rng), k = dim(rng), n = dim(rng);

        Tensor<double> a = random_tensor({m, k}, rng);
        Tensor<double> b = random_tensor({k, n}, rng);
        auto f_matmul = [&](GradTape<double>& t, ValueId in) {
            return scalarize(t, t.matmul(in, t.leaf(b, false)));
        };
        CHECK(supcon::grad_check<double>(f_matmul, a, 1e-6) <= 1e-5);

        Tensor<double> bt = random_tensor({n, k}, rng);
        auto f_nt = [&](GradTape<double>& t, ValueId in) {
            return scalarize(t, t.matmul_nt(in, t.leaf(bt, false)));
        };
        CHECK(supcon::grad_check<double>(f_nt, a, 1e-6) <= 1e-5);

        Tensor<double> x = random_tensor({m, k}, rng);
        auto f_relu = [&](GradTape<double>& t, ValueId in) {
            return scalarize(t, t.relu(in));
        };
        CHECK(supcon::grad_check<double>(f_relu, x, 1e-6) <= 1e-5);

        auto f_scale = [&](GradTape<double>& t, ValueId in) {
            return scalarize(t, t.scale(in, 0.37));
        };
        CHECK(supcon::grad_check<double>(f_scale, x, 1e-6) <= 1e-5);

        Tensor<double> other = random_tensor({m, k}, rng);
        auto f_add = [&](GradTape<double>& t, ValueId in) {
            return scalarize(t, t.add(in, t.leaf(other, false)));
        };
        CHECK(supcon::grad_check<double>(f_add, x, 1e-6) <= 1e-5);

        Tensor<double> img = random_tensor({2, 2, 4, 4}, rng);
        auto f_gap = [&](GradTape<double>& t, ValueId in) {
            return scalarize(t, t.global_avg_pool(in));
        };
        CHECK(supcon::grad_check<double>(f_gap, img, 1e-6) <= 1e-5);

        Tensor<double> cb = random_tensor({2}, rng);
        auto f_cbias = [&](GradTape<double>& t, ValueId in) {
            return scalarize(t, t.add_channel_bias(t.leaf(img, false), in));
        };
        CHECK(supcon::grad_check<double>(f_cbias, cb, 1e-6) <= 1e-5);

        Tensor<double> w = random_tensor({k, n}, rng);
        Tensor<double> bias = random_tensor({n}, rng);
        Tensor<double> dx = random_tensor({m, k}, rng);
        auto f_dense_w = [&](GradTape<double>& t, ValueId in) {
            return scalarize(t, t.dense(t.leaf(dx, false), in, t.leaf(bias, false)));
        };
        CHECK(supcon::grad_check<double>(f_dense_w, w, 1e-6) <= 1e-5);
        auto f_dense_b = [&](GradTape<double>& t, ValueId in) {
            return scalarize(t, t.dense(t.leaf(dx, false), t.leaf(w, false), in));
        };
        CHECK(supcon::grad_check<double>(f_dense_b, bias, 1e-6) <= 1e-5);

        Tensor<double> rows = random_tensor({m + 1, k + 1}, rng, 0.2, 1.0);
        auto f_norm = [&](GradTape<double>& t, ValueId in) {
            return scalarize(t, t.l2_normalize_rows(in));
        };
        CHECK(supcon::grad_check<double>(f_norm, rows, 1e-6) <= 1e-5);

        Tensor<double> vec = random_tensor({k + 1}, rng, -2.0, 2.0);
        auto f_lse = [&](GradTape<double>& t, ValueId in) {
            return scalarize(t, t.log_sum_exp(in));
        };
        CHECK(supcon::grad_check<double>(f_lse, vec, 1e-6) <= 1e-5);

        Tensor<double> sq = random_tensor({m + 2, m + 2}, rng, -2.0, 2.0);
        auto f_rlse = [&](GradTape<double>& t, ValueId in) {
            return scalarize(t, t.row_log_sum_exp(in, true));
        };
        CHECK(supcon::grad_check<double>(f_rlse, sq, 1e-6) <= 1e-5);
        auto f_rlse_full = [&](GradTape<double>& t, ValueId in) {
            return scalarize(t, t.row_log_sum_exp(in, false));
        };
        CHECK(supcon::grad_check<double>(f_rlse_full, sq, 1e-6) <= 1e-5);
        checked += 13;
    }
    CHECK(checked >= 100);
}

TEST_CASE("forward ops are deterministic across runs") {
    auto run = [] {
        std::mt19937_64 rng(99);
        Tensor<double> x = random_tensor({2, 3, 6, 6}, rng);
        Tensor<double> k = random_tensor({4, 3, 3, 3}, rng);
        GradTape<double> tape;
        ValueId y = tape.conv2d(tape.leaf(x, false), tape.leaf(k, false), 2);
        return tape.value(tape.global_avg_pool(y)).data;
    };
    CHECK(run() == run());
}

TEST_CASE("non-finite forward output raises") {
    GradTape<double> tape;
    ValueId x = tape.leaf(Tensor<double>({1}, {1e308}), false);
    CHECK_THROWS_AS(tape.add(x, x), supcon::NumericError);
}

TEST_CASE("tensor invariant: shape must match data length") {
    CHECK_THROWS_AS(Tensor<float>({2, 2}, {1, 2, 3}), supcon::ValidationError);
}
