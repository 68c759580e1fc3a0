#include "supcon/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"

using supcon::CEBatch;
using supcon::GradTape;
using supcon::Reduction;
using supcon::SupConBatch;
using supcon::Tensor;
using supcon::ValueId;

namespace {

SupConBatch<double> random_batch(std::mt19937_64& rng, std::size_t pairs_min = 2,
                                 std::size_t pairs_max = 8, std::size_t dim_min = 2,
                                 std::size_t dim_max = 16) {
    std::uniform_int_distribution<std::size_t> pd(pairs_min, pairs_max);
    std::uniform_int_distribution<std::size_t> dd(dim_min, dim_max);
    std::uniform_real_distribution<double> val(-1.0, 1.0);
    std::uniform_real_distribution<double> tau(0.04, 1.0);
    const std::size_t pairs = pd(rng), d = dd(rng), n = 2 * pairs;
    SupConBatch<double> batch;
    batch.projections = Tensor<double>::zeros({n, d});
    for (double& v : batch.projections.data) v = val(rng);
    // Two views per sample, laid out [first views | second views].
    std::uniform_int_distribution<int> cls(0, std::max<int>(1, static_cast<int>(pairs) - 1));
    batch.labels.resize(n);
    for (std::size_t i = 0; i < pairs; ++i) {
        batch.labels[i] = cls(rng);
        batch.labels[pairs + i] = batch.labels[i];
    }
    batch.temperature = tau(rng);
    return batch;
}

// Independent twin-positive (NT-Xent-style) formula for the reduction case
// where each view's only positive is its augmented twin.
double nt_xent_reference(const SupConBatch<double>& batch) {
    const std::size_t n = batch.projections.shape[0], d = batch.projections.shape[1];
    std::vector<std::vector<double>> z(n, std::vector<double>(d));
    for (std::size_t i = 0; i < n; ++i) {
        double norm = 0;
        for (std::size_t c = 0; c < d; ++c) {
            const double v = batch.projections.data[i * d + c];
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (std::size_t c = 0; c < d; ++c) z[i][c] = batch.projections.data[i * d + c] / norm;
    }
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t twin = n;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i && batch.labels[j] == batch.labels[i]) twin = j;
        REQUIRE(twin != n);
        double denom = 0, num = 0;
        for (std::size_t k = 0; k < n; ++k) {
            if (k == i) continue;
            double dot = 0;
            for (std::size_t c = 0; c < d; ++c) dot += z[i][c] * z[k][c];
            const double e = std::exp(dot / batch.temperature);
            denom += e;
            if (k == twin) num = e;
        }
        total += -std::log(num / denom);
    }
    return total;
}

// The rejected variant that averages positives inside the log.
double supcon_inside_log_variant(const SupConBatch<double>& batch) {
    const std::size_t n = batch.projections.shape[0], d = batch.projections.shape[1];
    std::vector<std::vector<double>> z(n, std::vector<double>(d));
    for (std::size_t i = 0; i < n; ++i) {
        double norm = 0;
        for (std::size_t c = 0; c < d; ++c) {
            const double v = batch.projections.data[i * d + c];
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (std::size_t c = 0; c < d; ++c) z[i][c] = batch.projections.data[i * d + c] / norm;
    }
    auto sim = [&](std::size_t i, std::size_t k) {
        double dot = 0;
        for (std::size_t c = 0; c < d; ++c) dot += z[i][c] * z[k][c];
        return dot;
    };
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t same = 0;
        double pos_sum = 0, denom = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            denom += std::exp(sim(i, j) / batch.temperature);
            if (batch.labels[j] == batch.labels[i]) {
                ++same;
                pos_sum += std::exp(sim(i, j) / batch.temperature);
            }
        }
        if (same == 0) continue;
        total += -std::log(pos_sum / static_cast<double>(same) / denom);
    }
    return total;
}

}  // namespace

TEST_CASE("positive_mask examples") {
    auto m = supcon::positive_mask({0, 1, 0, 1});
    CHECK(m[0 * 4 + 2] == 1);
    CHECK(m[0 * 4 + 1] == 0);
    CHECK(m[0 * 4 + 0] == 0);
    CHECK(m[1 * 4 + 3] == 1);
    for (std::size_t i = 0; i < 4; ++i) CHECK(m[i * 4 + i] == 0);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) CHECK(m[i * 4 + j] == m[j * 4 + i]);

    auto all_same = supcon::positive_mask({5, 5, 5, 5});
    for (std::size_t i = 0; i < 4; ++i) {
        int row = 0;
        for (std::size_t j = 0; j < 4; ++j) row += all_same[i * 4 + j];
        CHECK(row == 3);
    }

    auto distinct = supcon::positive_mask({1, 2, 3, 4});
    CHECK(std::accumulate(distinct.begin(), distinct.end(), 0) == 0);

    CHECK_THROWS_AS(supcon::positive_mask({0}), supcon::ValidationError);
}

TEST_CASE("cross-entropy closed forms") {
    SUBCASE("uniform logits give ln K per sample") {
        for (int k : {2, 10, 100, 345}) {
            CEBatch<double> batch{Tensor<double>::zeros({3, static_cast<std::size_t>(k)}),
                                  {0, k / 2, k - 1}, k};
            const double sum = supcon::cross_entropy_value(batch, Reduction::kSum);
            CHECK(std::abs(sum - 3.0 * std::log(k)) <= 1e-12);
            const double mean = supcon::cross_entropy_value(batch, Reduction::kMean);
            CHECK(std::abs(mean - std::log(k)) <= 1e-12);
        }
    }
    SUBCASE("saturated logits vanish") {
        CEBatch<double> batch{Tensor<double>({1, 3}, {100, 0, 0}), {0}, 3};
        CHECK(supcon::cross_entropy_value(batch, Reduction::kSum) < 1e-40);
    }
    SUBCASE("moderate logits match the naive-softmax oracle") {
        CEBatch<double> batch{Tensor<double>({1, 3}, {2, 0, 0}), {0}, 3};
        const double naive = -std::log(std::exp(2.0) / (std::exp(2.0) + 2.0));
        CHECK(naive == doctest::Approx(std::log(1.0 + 2.0 * std::exp(-2.0))).epsilon(1e-14));
        CHECK(supcon::cross_entropy_value(batch, Reduction::kSum) ==
              doctest::Approx(naive).epsilon(1e-12));
    }
    SUBCASE("label out of range rejected") {
        CEBatch<double> batch{Tensor<double>::zeros({1, 3}), {3}, 3};
        CHECK_THROWS_AS(supcon::cross_entropy_value(batch, Reduction::kSum),
                        supcon::ValidationError);
    }
}

TEST_CASE("supcon closed forms") {
    SUBCASE("identical embeddings give 4 ln 3") {
        SupConBatch<double> batch{
            Tensor<double>({4, 3}, {1, 0, 0, 1, 0, 0, 1, 0, 0, 1, 0, 0}), {0, 1, 0, 1}, 0.5};
        CHECK(std::abs(supcon::supcon_loss_value(batch, Reduction::kSum) - 4.0 * std::log(3.0)) <=
              1e-9);
        batch.temperature = 0.07;
        CHECK(std::abs(supcon::supcon_loss_value(batch, Reduction::kSum) - 4.0 * std::log(3.0)) <=
              1e-9);
    }
    SUBCASE("orthonormal two-pair case") {
        SupConBatch<double> batch{Tensor<double>({4, 2}, {1, 0, 0, 1, 1, 0, 0, 1}),
                                  {0, 1, 0, 1},
                                  1.0};
        const double expected = 4.0 * (std::log(std::exp(1.0) + 2.0) - 1.0);
        CHECK(expected == doctest::Approx(2.2057788).epsilon(1e-6));
        CHECK(std::abs(supcon::supcon_loss_value(batch, Reduction::kSum) - expected) <= 1e-9);
        CHECK(std::abs(supcon_loss_bruteforce(batch) - expected) <= 1e-9);
    }
    SUBCASE("huge temperature flattens to 4 ln 3") {
        std::mt19937_64 rng(21);
        SupConBatch<double> batch = random_batch(rng, 2, 2, 4, 4);
        batch.labels = {0, 1, 0, 1};
        batch.temperature = 1e6;
        CHECK(std::abs(supcon::supcon_loss_value(batch, Reduction::kSum) - 4.0 * std::log(3.0)) <=
              1e-3);
    }
    SUBCASE("errors") {
        SupConBatch<double> batch{Tensor<double>({2, 2}, {1, 0, 0, 1}), {0, 0}, 0.0};
        CHECK_THROWS_AS(supcon::supcon_loss_value(batch, Reduction::kSum),
                        supcon::ValidationError);
        batch.temperature = 0.1;
        batch.projections.data = {0, 0, 1, 0};  // near-zero row
        CHECK_THROWS_AS(supcon::supcon_loss_value(batch, Reduction::kSum),
                        supcon::ValidationError);
    }
}

TEST_CASE("supcon matches the brute-force oracle on random batches") {
    std::mt19937_64 rng(123);
    for (int it = 0; it < 200; ++it) {
        SupConBatch<double> batch = random_batch(rng);
        const double fast = supcon::supcon_loss_value(batch, Reduction::kSum);
        const double brute = supcon_loss_bruteforce(batch);
        CHECK(std::abs(fast - brute) <= 1e-9);
        const double mean = supcon::supcon_loss_value(batch, Reduction::kMean);
        CHECK(std::abs(mean - brute / static_cast<double>(batch.labels.size())) <= 1e-9);
    }
}

TEST_CASE("inside-log variant is rejected by the oracle") {
    std::mt19937_64 rng(321);
    double max_gap = 0;
    for (int it = 0; it < 20; ++it) {
        SupConBatch<double> batch = random_batch(rng, 3, 6, 3, 8);
        // Force a class with several members so the Jensen gap is visible.
        std::fill(batch.labels.begin(), batch.labels.end(), 0);
        const double brute = supcon_loss_bruteforce(batch);
        CHECK(std::abs(supcon::supcon_loss_value(batch, Reduction::kSum) - brute) <= 1e-9);
        max_gap = std::max(max_gap, std::abs(supcon_inside_log_variant(batch) - brute));
    }
    CHECK(max_gap > 1e-4);
}

TEST_CASE("supcon scale invariance") {
    std::mt19937_64 rng(9);
    for (double c : {0.5, 3.0, 7.0}) {
        SupConBatch<double> batch = random_batch(rng);
        const double base = supcon::supcon_loss_value(batch, Reduction::kSum);
        SupConBatch<double> scaled = batch;
        for (double& v : scaled.projections.data) v *= c;
        CHECK(std::abs(supcon::supcon_loss_value(scaled, Reduction::kSum) - base) <= 1e-9);
    }
}

TEST_CASE("supcon and brute force are permutation invariant") {
    std::mt19937_64 rng(10);
    SupConBatch<double> batch = random_batch(rng, 3, 5, 3, 6);
    const double base = supcon::supcon_loss_value(batch, Reduction::kSum);
    const double base_brute = supcon_loss_bruteforce(batch);
    const std::size_t n = batch.labels.size(), d = batch.projections.shape[1];
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (int it = 0; it < 50; ++it) {
        std::shuffle(perm.begin(), perm.end(), rng);
        SupConBatch<double> shuffled = batch;
        for (std::size_t i = 0; i < n; ++i) {
            shuffled.labels[i] = batch.labels[perm[i]];
            for (std::size_t c = 0; c < d; ++c)
                shuffled.projections.data[i * d + c] = batch.projections.data[perm[i] * d + c];
        }
        CHECK(std::abs(supcon::supcon_loss_value(shuffled, Reduction::kSum) - base) <= 1e-12);
        CHECK(std::abs(supcon_loss_bruteforce(shuffled) - base_brute) <= 1e-12);
    }
}

TEST_CASE("twin-positive batches reduce to the NT-Xent formula") {
    std::mt19937_64 rng(11);
    for (int it = 0; it < 100; ++it) {
        SupConBatch<double> batch = random_batch(rng, 2, 6, 2, 8);
        // Make every class unique so each view's only positive is its twin.
        const std::size_t pairs = batch.labels.size() / 2;
        for (std::size_t i = 0; i < pairs; ++i) {
            batch.labels[i] = static_cast<int>(i);
            batch.labels[pairs + i] = static_cast<int>(i);
        }
        CHECK(std::abs(supcon::supcon_loss_value(batch, Reduction::kSum) -
                       nt_xent_reference(batch)) <= 1e-9);
    }
}

TEST_CASE("views without positives contribute zero") {
    SupConBatch<double> batch{Tensor<double>({3, 2}, {1, 0, 0, 1, 1, 1}), {0, 1, 2}, 0.2};
    CHECK(supcon::count_singleton_views(batch.labels) == 3);
    CHECK(supcon::supcon_loss_value(batch, Reduction::kSum) == 0.0);

    batch.labels = {0, 1, 0};
    CHECK(supcon::count_singleton_views(batch.labels) == 1);
    CHECK(supcon::supcon_loss_value(batch, Reduction::kSum) > 0.0);
}

TEST_CASE("loss gradients match finite differences") {
    std::mt19937_64 rng(55);
    for (int it = 0; it < 10; ++it) {
        SupConBatch<double> batch = random_batch(rng, 2, 4, 2, 6);
        auto f_supcon = [&](GradTape<double>& t, ValueId z) {
            return supcon::supcon_loss(t, z, batch.labels, batch.temperature, Reduction::kSum);
        };
        CHECK(supcon::grad_check<double>(f_supcon, batch.projections, 1e-6) <= 1e-5);

        std::uniform_int_distribution<int> kd(2, 6), nd(1, 6);
        std::uniform_real_distribution<double> val(-2.0, 2.0);
        const int k = kd(rng), n = nd(rng);
        Tensor<double> logits =
            Tensor<double>::zeros({static_cast<std::size_t>(n), static_cast<std::size_t>(k)});
        for (double& v : logits.data) v = val(rng);
        std::vector<int> labels(n);
        std::uniform_int_distribution<int> ld(0, k - 1);
        for (int& t : labels) t = ld(rng);
        auto f_ce = [&](GradTape<double>& t, ValueId s) {
            return supcon::cross_entropy(t, s, labels, k, Reduction::kMean);
        };
        CHECK(supcon::grad_check<double>(f_ce, logits, 1e-6) <= 1e-5);
    }
}
