#include "supcon/evalsuite.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include "doctest.h"
#include "supcon/metrics.hpp"

using supcon::EvalProtocolConfig;
using supcon::ImageBank;
using supcon::MetricKind;
using supcon::ModelBundle;
using supcon::ReportRow;
using supcon::RunReport;
using supcon::SweepGrid;
using supcon::SweepPoint;
using supcon::Tensor;

TEST_CASE("top1 accuracy examples") {
    // argmaxes: 0 0 0 1 1 0 against labels 0 0 0 0 1 1 -> 4/6.
    Tensor<float> logits({6, 2}, {2, 1, 3, 0, 1, 0, 0, 2, 1, 4, 5, 2});
    CHECK(supcon::top1_accuracy(logits, {0, 0, 0, 0, 1, 1}) == doctest::Approx(4.0 / 6.0));

    Tensor<float> perfect({3, 3}, {9, 0, 0, 0, 9, 0, 0, 0, 9});
    CHECK(supcon::top1_accuracy(perfect, {0, 1, 2}) == 1.0);

    // All-equal logits predict class 0 everywhere (lowest-index tie rule).
    Tensor<float> flat = Tensor<float>::zeros({4, 3});
    CHECK(supcon::top1_accuracy(flat, {0, 0, 1, 2}) == doctest::Approx(0.5));
}

TEST_CASE("mean-per-class accuracy examples") {
    // class 0: 3/4 correct; class 1: 1/2 correct.
    Tensor<float> logits({6, 2}, {2, 0, 2, 0, 2, 0, 0, 2, 0, 2, 2, 0});
    auto r = supcon::mean_per_class_accuracy(logits, {0, 0, 0, 0, 1, 1}, 2);
    CHECK(r.accuracy == doctest::Approx(0.625).epsilon(1e-12));
    CHECK(r.classes_present == 2);
    CHECK(r.classes_excluded == 0);

    auto excluded = supcon::mean_per_class_accuracy(logits, {0, 0, 0, 0, 1, 1}, 5);
    CHECK(excluded.classes_excluded == 3);
    CHECK(excluded.accuracy == doctest::Approx(0.625).epsilon(1e-12));
}

TEST_CASE("balanced sets make mean-per-class equal top-1") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> d(-1.0f, 1.0f);
    const int k = 4, per = 25;
    Tensor<float> logits = Tensor<float>::zeros({static_cast<std::size_t>(k * per),
                                                 static_cast<std::size_t>(k)});
    for (float& v : logits.data) v = d(rng);
    std::vector<int> labels;
    for (int c = 0; c < k; ++c) labels.insert(labels.end(), per, c);
    const double top1 = supcon::top1_accuracy(logits, labels);
    const double mpc = supcon::mean_per_class_accuracy(logits, labels, k).accuracy;
    CHECK(std::abs(top1 - mpc) <= 1e-12);
}

TEST_CASE("mean-per-class matches a brute-force per-class tally") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<float> d(-1.0f, 1.0f);
    std::uniform_int_distribution<int> kd(2, 7), nd(5, 60);
    for (int it = 0; it < 100; ++it) {
        const int k = kd(rng), n = nd(rng);
        Tensor<float> logits =
            Tensor<float>::zeros({static_cast<std::size_t>(n), static_cast<std::size_t>(k)});
        for (float& v : logits.data) v = d(rng);
        std::uniform_int_distribution<int> ld(0, k - 1);
        std::vector<int> labels(static_cast<std::size_t>(n));
        for (int& t : labels) t = ld(rng);

        // Brute force: explicit per-class maps, recomputing argmax separately.
        std::map<int, int> total, correct;
        for (int i = 0; i < n; ++i) {
            int best = 0;
            for (int j = 1; j < k; ++j)
                if (logits.data[static_cast<std::size_t>(i * k + j)] >
                    logits.data[static_cast<std::size_t>(i * k + best)])
                    best = j;
            total[labels[static_cast<std::size_t>(i)]] += 1;
            if (best == labels[static_cast<std::size_t>(i)])
                correct[labels[static_cast<std::size_t>(i)]] += 1;
        }
        double brute = 0;
        for (const auto& [cls, count] : total)
            brute += static_cast<double>(correct[cls]) / count;
        brute /= static_cast<double>(total.size());

        CHECK(std::abs(supcon::mean_per_class_accuracy(logits, labels, k).accuracy - brute) <=
              1e-12);
    }
}

TEST_CASE("aggregate_runs") {
    auto agg = supcon::aggregate_runs({1, 2, 3, 4, 5});
    CHECK(agg.mean == doctest::Approx(3.0).epsilon(1e-12));
    REQUIRE(agg.stddev.has_value());
    CHECK(*agg.stddev == doctest::Approx(std::sqrt(2.5)).epsilon(1e-9));

    auto same = supcon::aggregate_runs({0.7, 0.7, 0.7});
    CHECK(*same.stddev == 0.0);

    auto single = supcon::aggregate_runs({0.9});
    CHECK(single.mean == 0.9);
    CHECK_FALSE(single.stddev.has_value());

    // Two-pass comparison.
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> d(0.0, 1.0);
    std::vector<double> accs(11);
    for (double& v : accs) v = d(rng);
    auto got = supcon::aggregate_runs(accs);
    double mean = 0;
    for (double v : accs) mean += v;
    mean /= static_cast<double>(accs.size());
    double ss = 0;
    for (double v : accs) ss += (v - mean) * (v - mean);
    CHECK(std::abs(got.mean - mean) <= 1e-12);
    CHECK(std::abs(*got.stddev - std::sqrt(ss / (accs.size() - 1))) <= 1e-12);
}

TEST_CASE("sweep runs the full grid and selects with tie-breaks") {
    SweepGrid grid;  // 3 lrs × 3 batches
    int calls = 0;
    auto outcome = supcon::run_sweep(grid, [&](double lr, int batch) {
        ++calls;
        return lr == 0.01 && batch == 64 ? 0.9 : 0.5;
    });
    CHECK(calls == 9);
    CHECK(outcome.table.size() == 9);
    CHECK(outcome.chosen.lr == 0.01);
    CHECK(outcome.chosen.batch == 64);

    // All-equal accuracies: smallest lr, then smallest batch.
    auto tied = supcon::run_sweep(grid, [](double, int) { return 0.4; });
    CHECK(tied.chosen.lr == 0.001);
    CHECK(tied.chosen.batch == 32);

    SweepGrid single;
    single.learning_rates = {0.05};
    single.batch_sizes = {16};
    auto one = supcon::run_sweep(single, [](double, int) { return 0.1; });
    CHECK(one.chosen.lr == 0.05);
    CHECK(one.chosen.batch == 16);

    SweepGrid empty;
    empty.learning_rates = {};
    CHECK_THROWS_AS(supcon::run_sweep(empty, [](double, int) { return 0.0; }),
                    supcon::ValidationError);
}

TEST_CASE("select_best on an injected table") {
    std::vector<SweepPoint> table = {
        {0.1, 32, 0.61}, {0.1, 64, 0.72}, {0.01, 32, 0.72}, {0.001, 128, 0.70}};
    auto chosen = supcon::select_best(table);
    CHECK(chosen.lr == 0.01);  // ties at 0.72 resolve to the smaller lr
    CHECK(chosen.batch == 32);
}

TEST_CASE("report writing and parsing") {
    RunReport report;
    ReportRow row;
    row.dataset = "shapes";
    row.model = "supcon";
    row.metric = MetricKind::kTop1;
    row.run_accuracies = {0.91, 0.93};
    row.mean = 0.92;
    row.stddev = 0.0141;
    row.lr = 0.01;
    row.batch = 64;
    report.rows.push_back(row);

    const auto path = std::filesystem::temp_directory_path() / "supcon_test_report.csv";
    SUBCASE("single row plus mean row") {
        supcon::write_report(report, path.string());
        RunReport back = supcon::read_report(path.string());
        REQUIRE(back.rows.size() == 2);
        CHECK(back.rows[0].dataset == "shapes");
        CHECK(std::abs(back.rows[0].mean - 0.92) <= 1e-4);
        CHECK(std::abs(*back.rows[0].stddev - 0.0141) <= 1e-4);
        CHECK(back.rows[0].lr == 0.01);
        CHECK(back.rows[0].batch == 64);
        CHECK(back.rows[1].dataset == "__mean__");
        CHECK(back.rows[1].model == "supcon");
        CHECK(std::abs(back.rows[1].mean - 0.92) <= 1e-4);
    }
    SUBCASE("mean row averages dataset means per model") {
        ReportRow second = row;
        second.dataset = "glyphs";
        second.mean = 0.52;
        report.rows.push_back(second);
        supcon::write_report(report, path.string());
        RunReport back = supcon::read_report(path.string());
        REQUIRE(back.rows.size() == 3);
        CHECK(back.rows[2].dataset == "__mean__");
        CHECK(std::abs(back.rows[2].mean - 0.72) <= 1e-4);
    }
    std::filesystem::remove(path);
}

TEST_CASE("sweep trace file") {
    const auto path = std::filesystem::temp_directory_path() / "supcon_test_trace.csv";
    supcon::write_sweep_trace({{0.1, 32, 0.5}, {0.1, 64, 0.25}}, path.string());
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "lr,batch,val_accuracy");
    std::getline(in, line);
    CHECK(line == "0.1,32,0.5000");
    std::filesystem::remove(path);
}

TEST_CASE("linear_eval_protocol end to end at toy scale") {
    ImageBank pretrain_bank = supcon::gen_synthetic_multidomain(2, 1, 8, 3, 0.0);
    supcon::TrainConfig cfg;
    cfg.stage = supcon::TrainStage::kPretrainSupCon;
    cfg.encoder.width = 4;
    cfg.encoder.feature_dim = 16;
    cfg.head_out_dim = 8;
    cfg.batch_size = 8;
    cfg.schedule.base_lr = 0.05;
    cfg.schedule.warmup_epochs = 0;
    cfg.schedule.decay_epochs = {};
    cfg.schedule.total_epochs = 1;
    cfg.policy.strategy = supcon::AugStrategy::kSimAugment;
    ModelBundle pretrained = supcon::pretrain(pretrain_bank, cfg).bundle;

    ImageBank downstream = supcon::gen_synthetic_multidomain(2, 1, 20, 5, 0.3);
    EvalProtocolConfig eval;
    eval.grid.learning_rates = {0.1, 0.01};
    eval.grid.batch_sizes = {4};
    eval.runs = 3;
    eval.probe_epochs = 2;
    eval.seed = 7;
    auto result = supcon::linear_eval_protocol(pretrained, downstream, "shapes", "supcon", eval);
    CHECK(result.trace.size() == 2);
    CHECK(result.row.run_accuracies.size() == 3);
    CHECK(result.row.mean >= 0.0);
    CHECK(result.row.mean <= 1.0);
    CHECK(result.row.stddev.has_value());
    // Retraining after the sweep uses train+val: 70% of the 28 non-test
    // records plus the remaining 30%.
    CHECK(result.final_train_size == 28);
}

TEST_CASE("ablate emits one row per value per bank") {
    ImageBank pretrain_bank = supcon::gen_synthetic_multidomain(2, 1, 6, 3, 0.0);
    ImageBank downstream = supcon::gen_synthetic_multidomain(2, 1, 20, 5, 0.3);
    supcon::AblateInputs inputs;
    inputs.pretrain_bank = &pretrain_bank;
    inputs.eval_banks = {{"shapes", &downstream}};
    inputs.base.encoder.width = 4;
    inputs.base.encoder.feature_dim = 16;
    inputs.base.head_out_dim = 8;
    inputs.eval.grid.learning_rates = {0.1};
    inputs.eval.grid.batch_sizes = {4};
    inputs.eval.runs = 2;
    inputs.eval.probe_epochs = 1;
    inputs.eval.seed = 11;

    // Stub the pretraining stage: the knob plumbing is what is under test.
    std::vector<double> taus;
    supcon::PretrainFn stub = [&](const ImageBank&, const supcon::TrainConfig& cfg) {
        taus.push_back(cfg.tau);
        return supcon::init_params(cfg.encoder, 4, cfg.encoder.feature_dim, cfg.head_out_dim, 0);
    };

    auto values = supcon::default_ablate_values(supcon::AblateKnob::kTemperature);
    CHECK(values == std::vector<std::string>{"0.04", "0.07", "0.10", "0.13", "0.17"});
    RunReport report = supcon::ablate(supcon::AblateKnob::kTemperature, values, inputs, stub);
    CHECK(report.rows.size() == 5);
    CHECK(taus == std::vector<double>{0.04, 0.07, 0.10, 0.13, 0.17});
    CHECK(report.rows[0].model == "temperature=0.04");

    RunReport single = supcon::ablate(supcon::AblateKnob::kEncoder, {"small"}, inputs, stub);
    CHECK(single.rows.size() == 1);

    CHECK_THROWS_AS(supcon::ablate(supcon::AblateKnob::kTemperature, {}, inputs, stub),
                    supcon::ValidationError);
    CHECK(supcon::ablate_knob_from_name("augmentation") == supcon::AblateKnob::kAugmentation);
    CHECK_THROWS_AS(supcon::ablate_knob_from_name("dropout"), supcon::ValidationError);
    CHECK(supcon::default_ablate_values(supcon::AblateKnob::kAugmentation).size() == 4);
    CHECK(supcon::default_ablate_values(supcon::AblateKnob::kEncoder) ==
          std::vector<std::string>{"small", "deep"});
}
