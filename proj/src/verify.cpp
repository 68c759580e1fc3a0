#include "supcon/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>

#include "supcon/data.hpp"
#include "supcon/losses.hpp"
#include "supcon/metrics.hpp"
#include "supcon/trainer.hpp"

namespace supcon {

namespace {

struct CheckFailure {
    std::string message;
};

void expect(bool ok, const std::string& message) {
    if (!ok) throw CheckFailure{message};
}

SupConBatch<double> random_supcon_batch(std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> pairs(2, 8), dims(2, 16);
    std::uniform_real_distribution<double> val(-1.0, 1.0), tau(0.04, 1.0);
    const std::size_t n = 2 * pairs(rng), d = dims(rng);
    SupConBatch<double> batch;
    batch.projections = Tensor<double>::zeros({n, d});
    for (double& v : batch.projections.data) v = val(rng);
    std::uniform_int_distribution<int> cls(0, static_cast<int>(n / 2) - 1);
    batch.labels.resize(n);
    for (std::size_t i = 0; i < n / 2; ++i) {
        batch.labels[i] = cls(rng);
        batch.labels[n / 2 + i] = batch.labels[i];
    }
    batch.temperature = tau(rng);
    return batch;
}

// The averaging-inside-the-log variant the oracle must reject.
double inside_log_loss(const SupConBatch<double>& batch) {
    const std::size_t n = batch.projections.shape[0], d = batch.projections.shape[1];
    std::vector<std::vector<double>> z(n, std::vector<double>(d));
    for (std::size_t i = 0; i < n; ++i) {
        double norm = 0;
        for (std::size_t c = 0; c < d; ++c) {
            norm += batch.projections.data[i * d + c] * batch.projections.data[i * d + c];
        }
        norm = std::sqrt(norm);
        for (std::size_t c = 0; c < d; ++c) z[i][c] = batch.projections.data[i * d + c] / norm;
    }
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double denom = 0, pos = 0;
        std::size_t same = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            double dot = 0;
            for (std::size_t c = 0; c < d; ++c) dot += z[i][c] * z[j][c];
            const double e = std::exp(dot / batch.temperature);
            denom += e;
            if (batch.labels[j] == batch.labels[i]) {
                pos += e;
                ++same;
            }
        }
        if (same == 0) continue;
        total += -std::log(pos / static_cast<double>(same) / denom);
    }
    return total;
}

std::string verify_oracle() {
    std::mt19937_64 rng(2024);
    double max_diff = 0;
    for (int it = 0; it < 60; ++it) {
        SupConBatch<double> batch = random_supcon_batch(rng);
        const double fast = supcon_loss_value(batch, Reduction::kSum);
        const double brute = supcon_loss_bruteforce(batch);
        max_diff = std::max(max_diff, std::abs(fast - brute));
    }
    expect(max_diff <= 1e-9, "vectorized/brute-force gap " + std::to_string(max_diff));

    SupConBatch<double> same{Tensor<double>({4, 2}, {1, 0, 1, 0, 1, 0, 1, 0}), {0, 1, 0, 1}, 0.3};
    expect(std::abs(supcon_loss_value(same, Reduction::kSum) - 4 * std::log(3.0)) <= 1e-9,
           "identical-embedding closed form");
    CEBatch<double> uniform{Tensor<double>::zeros({2, 10}), {3, 9}, 10};
    expect(std::abs(cross_entropy_value(uniform, Reduction::kSum) - 2 * std::log(10.0)) <= 1e-12,
           "uniform-logit closed form");

    // A miscoded inside-log coefficient must be visibly rejected.
    double mutation_gap = 0;
    for (int it = 0; it < 10; ++it) {
        SupConBatch<double> batch = random_supcon_batch(rng);
        std::fill(batch.labels.begin(), batch.labels.end(), 0);
        mutation_gap =
            std::max(mutation_gap, std::abs(inside_log_loss(batch) - supcon_loss_bruteforce(batch)));
        expect(std::abs(supcon_loss_value(batch, Reduction::kSum) -
                        supcon_loss_bruteforce(batch)) <= 1e-9,
               "oracle equivalence on all-same-label batch");
    }
    expect(mutation_gap > 1e-4, "inside-log mutation not detected");

    char buf[96];
    std::snprintf(buf, sizeof(buf), "60 random batches, max |fast-brute| = %.2e", max_diff);
    return buf;
}

std::string verify_gradcheck() {
    std::mt19937_64 rng(77);
    double worst = 0;
    for (int it = 0; it < 8; ++it) {
        SupConBatch<double> batch = random_supcon_batch(rng);
        auto f = [&](GradTape<double>& t, ValueId z) {
            return supcon_loss(t, z, batch.labels, batch.temperature, Reduction::kSum);
        };
        worst = std::max(worst, grad_check<double>(f, batch.projections, 1e-6));
    }
    std::uniform_real_distribution<double> val(-2.0, 2.0);
    for (int it = 0; it < 8; ++it) {
        const int n = 4, k = 5;
        Tensor<double> logits = Tensor<double>::zeros({n, k});
        for (double& v : logits.data) v = val(rng);
        std::uniform_int_distribution<int> ld(0, k - 1);
        std::vector<int> labels(n);
        for (int& t : labels) t = ld(rng);
        auto f = [&](GradTape<double>& t, ValueId s) {
            return cross_entropy(t, s, labels, k, Reduction::kSum);
        };
        worst = std::max(worst, grad_check<double>(f, logits, 1e-6));
    }
    expect(worst <= 1e-5, "finite-difference error " + std::to_string(worst));
    char buf[96];
    std::snprintf(buf, sizeof(buf), "16 loss instances, max rel err = %.2e", worst);
    return buf;
}

std::string verify_schedule() {
    ScheduleSpec spec;  // published recipe: 0.1, warmup 10, decays {250,350}
    expect(lr_at_epoch(spec, 5) == 0.1 * (5.0 / 10.0), "warmup midpoint");
    expect(lr_at_epoch(spec, 10) == 0.1, "warmup end");
    expect(lr_at_epoch(spec, 249) == 0.1, "pre-decay plateau");
    expect(lr_at_epoch(spec, 251) == 0.1 * 0.1, "first decay");
    expect(lr_at_epoch(spec, 351) == 0.1 * 0.1 * 0.1, "second decay");
    ScheduleSpec flat;
    flat.warmup_epochs = 0;
    flat.decay_epochs = {};
    flat.total_epochs = 50;
    expect(lr_at_epoch(flat, 27) == flat.base_lr, "constant schedule");
    return "warmup/decay grid exact";
}

std::string verify_formats() {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "supcon_verify";
    fs::create_directories(dir);
    ImageBank bank = gen_synthetic_multidomain(3, 2, 4, 77);
    const fs::path bank_path = dir / "bank.mdib";
    write_bank(bank, bank_path.string());
    const auto first = serialize_bank(read_bank(bank_path.string()));
    expect(first == serialize_bank(bank), "bank round-trip bytes");

    EncoderConfig cfg;
    cfg.width = 4;
    cfg.feature_dim = 16;
    ModelBundle bundle = init_params(cfg, 5, 16, 8, 0);
    bundle.metadata["stage"] = "pretrain_supcon";
    const fs::path ckpt_path = dir / "model.sckp";
    save_checkpoint(bundle, ckpt_path.string());
    expect(serialize_checkpoint(load_checkpoint(ckpt_path.string())) ==
               serialize_checkpoint(bundle),
           "checkpoint round-trip bytes");
    fs::remove_all(dir);
    return "MDIB and SCKP round-trips byte-identical";
}

std::string verify_metrics() {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<float> d(-1.0f, 1.0f);
    for (int it = 0; it < 20; ++it) {
        const int k = 2 + static_cast<int>(rng() % 5), n = 8 + static_cast<int>(rng() % 40);
        Tensor<float> logits =
            Tensor<float>::zeros({static_cast<std::size_t>(n), static_cast<std::size_t>(k)});
        for (float& v : logits.data) v = d(rng);
        std::vector<int> labels(static_cast<std::size_t>(n));
        for (int& t : labels) t = static_cast<int>(rng() % static_cast<std::uint64_t>(k));
        std::vector<int> total(static_cast<std::size_t>(k), 0),
            correct(static_cast<std::size_t>(k), 0);
        for (int i = 0; i < n; ++i) {
            int best = 0;
            for (int j = 1; j < k; ++j)
                if (logits.data[static_cast<std::size_t>(i * k + j)] >
                    logits.data[static_cast<std::size_t>(i * k + best)])
                    best = j;
            ++total[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
            if (best == labels[static_cast<std::size_t>(i)])
                ++correct[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
        }
        double brute = 0;
        int present = 0;
        for (int c = 0; c < k; ++c) {
            if (total[static_cast<std::size_t>(c)] == 0) continue;
            ++present;
            brute += static_cast<double>(correct[static_cast<std::size_t>(c)]) /
                     total[static_cast<std::size_t>(c)];
        }
        brute /= present;
        expect(std::abs(mean_per_class_accuracy(logits, labels, k).accuracy - brute) <= 1e-12,
               "mean-per-class tally mismatch");
    }
    Tensor<float> flat = Tensor<float>::zeros({3, 4});
    expect(top1_accuracy(flat, {0, 0, 0}) == 1.0, "tie-break to lowest index");
    const RunAggregate agg = aggregate_runs({1, 2, 3, 4, 5});
    expect(std::abs(agg.mean - 3.0) <= 1e-12 && std::abs(*agg.stddev - std::sqrt(2.5)) <= 1e-12,
           "aggregate mean/std");
    return "20 random confusion sets match the brute-force tally";
}

std::string verify_augment() {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<float> d(0.0f, 1.0f);
    Image img(32, 32);
    for (float& v : img.data) v = d(rng);

    AugParams params;
    for (int s = 0; s < 5; ++s) {
        SampleRng srng(5, 1, static_cast<std::uint64_t>(s));
        const Image a = sim_augment(img, params, srng);
        const Image b = sim_augment(img, params, srng);
        expect(a.data == b.data, "sim_augment determinism");
        for (float v : a.data) expect(v >= 0.0f && v <= 1.0f, "sim_augment range");
    }
    for (TransformKind kind : {TransformKind::kRotate, TransformKind::kShearX,
                               TransformKind::kTranslateY}) {
        const Image out = apply_transform(kind, 0.0, img);
        for (std::size_t i = 0; i < img.data.size(); ++i) {
            expect(std::abs(out.data[i] - img.data[i]) <= 1.0f / 255.0f,
                   "zero-magnitude geometric identity");
        }
    }
    expect(autoaugment_imagenet_policy().size() == 25, "policy table size");
    const PolicyTable reparsed = parse_policy(policy_to_text(autoaugment_imagenet_policy()));
    expect(reparsed.size() == 25, "policy text round-trip");
    return "determinism, range, zero-magnitude identity, policy table";
}

}  // namespace

const std::vector<std::string>& verify_suite_names() {
    static const std::vector<std::string> kNames = {"oracle",  "gradcheck", "schedule",
                                                    "formats", "metrics",   "augment"};
    return kNames;
}

std::vector<VerifyResult> run_verify(const std::string& filter) {
    using Suite = std::function<std::string()>;
    const std::vector<std::pair<std::string, Suite>> suites = {
        {"oracle", verify_oracle},   {"gradcheck", verify_gradcheck},
        {"schedule", verify_schedule}, {"formats", verify_formats},
        {"metrics", verify_metrics}, {"augment", verify_augment},
    };
    if (!filter.empty()) {
        const auto& names = verify_suite_names();
        if (std::find(names.begin(), names.end(), filter) == names.end()) {
            throw ValidationError("verify: unknown suite '" + filter + "'");
        }
    }
    std::vector<VerifyResult> results;
    for (const auto& [name, suite] : suites) {
        if (!filter.empty() && name != filter) continue;
        VerifyResult result;
        result.suite = name;
        try {
            result.detail = suite();
            result.passed = true;
        } catch (const CheckFailure& failure) {
            result.passed = false;
            result.detail = failure.message;
        } catch (const std::exception& e) {
            result.passed = false;
            result.detail = e.what();
        }
        results.push_back(std::move(result));
    }
    return results;
}

}  // namespace supcon
