#include "supcon/models.hpp"

#include <cmath>
#include <random>

#include "doctest.h"

using supcon::EncoderArch;
using supcon::EncoderConfig;
using supcon::GradTape;
using supcon::ModelBundle;
using supcon::NamedTensor;
using supcon::ParamIds;
using supcon::Tensor;
using supcon::ValueId;

namespace {

Tensor<float> random_images(std::size_t batch, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> d(0.0f, 1.0f);
    Tensor<float> t = Tensor<float>::zeros({batch, 3, 32, 32});
    for (float& v : t.data) v = d(rng);
    return t;
}

EncoderConfig small_cfg() {
    EncoderConfig cfg;
    cfg.width = 4;
    cfg.feature_dim = 16;
    return cfg;
}

}  // namespace

TEST_CASE("zero images and zero biases give zero features") {
    EncoderConfig cfg = small_cfg();
    ModelBundle bundle = supcon::init_params(cfg, 1, 16, 8, 0);
    GradTape<float> tape;
    ParamIds ids = supcon::record_params(tape, bundle, false);
    ValueId imgs = tape.leaf(Tensor<float>::zeros({2, 3, 32, 32}), false);
    const Tensor<float>& feats = tape.value(supcon::encoder_forward(tape, cfg, ids, imgs));
    for (float v : feats.data) CHECK(v == 0.0f);
}

TEST_CASE("encoder forward is deterministic and well shaped") {
    EncoderConfig cfg = small_cfg();
    ModelBundle bundle = supcon::init_params(cfg, 7, 0, 0, 0);
    Tensor<float> imgs = random_images(4, 3);
    auto run = [&] {
        GradTape<float> tape;
        ParamIds ids = supcon::record_params(tape, bundle, false);
        return tape.value(supcon::encoder_forward(tape, cfg, ids, tape.leaf(imgs, false))).data;
    };
    auto a = run();
    CHECK(a == run());
    CHECK(a.size() == 4 * static_cast<std::size_t>(cfg.feature_dim));
    for (float v : a) CHECK(std::isfinite(v));

    GradTape<float> tape;
    ParamIds ids = supcon::record_params(tape, bundle, false);
    ValueId bad = tape.leaf(Tensor<float>::zeros({1, 3, 16, 16}), false);
    CHECK_THROWS_AS(supcon::encoder_forward(tape, cfg, ids, bad), supcon::ValidationError);
}

TEST_CASE("projection rows are unit norm") {
    EncoderConfig cfg = small_cfg();
    ModelBundle bundle = supcon::init_params(cfg, 5, 16, 8, 0);
    GradTape<float> tape;
    ParamIds ids = supcon::record_params(tape, bundle, false);
    ValueId imgs = tape.leaf(random_images(3, 11), false);
    ValueId feats = supcon::encoder_forward(tape, cfg, ids, imgs);
    const Tensor<float>& proj = tape.value(supcon::projection_forward(tape, ids, feats));
    REQUIRE(proj.shape == std::vector<std::size_t>{3, 8});
    for (std::size_t r = 0; r < 3; ++r) {
        double norm = 0;
        for (std::size_t c = 0; c < 8; ++c) norm += proj.at(r, c) * proj.at(r, c);
        CHECK(std::abs(std::sqrt(norm) - 1.0) <= 1e-6);
    }
}

TEST_CASE("all-zero head weights hit the degenerate-input guard") {
    EncoderConfig cfg = small_cfg();
    ModelBundle bundle = supcon::init_params(cfg, 5, 16, 8, 0);
    for (NamedTensor<float>& p : bundle.params) {
        if (supcon::param_group(p.name) == "head") {
            std::fill(p.value.data.begin(), p.value.data.end(), 0.0f);
        }
    }
    GradTape<float> tape;
    ParamIds ids = supcon::record_params(tape, bundle, false);
    ValueId feats = tape.leaf(Tensor<float>::full({2, 16}, 0.5f), false);
    CHECK_THROWS_AS(supcon::projection_forward(tape, ids, feats), supcon::ValidationError);
}

TEST_CASE("gradient check through head plus normalization") {
    EncoderConfig cfg = small_cfg();
    auto params = supcon::init_param_tensors<double>(cfg, 13, 6, 4, 0);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    Tensor<double> feats = Tensor<double>::zeros({3, 16});
    for (double& v : feats.data) v = d(rng);
    Tensor<double> weights = Tensor<double>::zeros({3, 4});
    for (double& v : weights.data) v = d(rng);

    auto f = [&](GradTape<double>& t, ValueId in) {
        ParamIds ids = supcon::record_params<double>(t, params, {}, false);
        return t.inner(supcon::projection_forward(t, ids, in), weights);
    };
    CHECK(supcon::grad_check<double>(f, feats, 1e-6) <= 1e-5);

    // And through the head parameters themselves.
    for (const auto& p : params) {
        if (supcon::param_group(p.name) != "head") continue;
        auto f_param = [&](GradTape<double>& t, ValueId in) {
            ParamIds ids;
            for (const auto& q : params)
                ids[q.name] = q.name == p.name ? in : t.leaf(q.value, false);
            return t.inner(supcon::projection_forward(t, ids, t.leaf(feats, false)), weights);
        };
        CHECK(supcon::grad_check<double>(f_param, p.value, 1e-6) <= 1e-5);
    }
}

TEST_CASE("classifier with identity weights reproduces features") {
    EncoderConfig cfg = small_cfg();
    ModelBundle bundle = supcon::init_params(cfg, 5, 0, 0, 16);
    for (NamedTensor<float>& p : bundle.params) {
        if (p.name == "classifier.fc.weight") {
            std::fill(p.value.data.begin(), p.value.data.end(), 0.0f);
            for (std::size_t i = 0; i < 16; ++i) p.value.at(i, i) = 1.0f;
        }
    }
    GradTape<float> tape;
    ParamIds ids = supcon::record_params(tape, bundle, false);
    Tensor<float> feats = Tensor<float>::zeros({2, 16});
    for (std::size_t i = 0; i < feats.data.size(); ++i) feats.data[i] = 0.01f * (i + 1);
    ValueId logits = supcon::classifier_forward(tape, ids, tape.leaf(feats, false));
    CHECK(tape.value(logits).data == feats.data);
}

TEST_CASE("the 345-class combined-source configuration is accepted") {
    EncoderConfig cfg = small_cfg();
    ModelBundle bundle = supcon::init_params(cfg, 5, 0, 0, 345);
    CHECK(bundle.find("classifier.fc.weight").value.shape ==
          std::vector<std::size_t>{16, 345});
}

TEST_CASE("init determinism and statistics") {
    EncoderConfig cfg;
    cfg.width = 8;
    cfg.feature_dim = 128;
    ModelBundle a = supcon::init_params(cfg, 42, 128, 128, 0);
    ModelBundle b = supcon::init_params(cfg, 42, 128, 128, 0);
    REQUIRE(a.params.size() == b.params.size());
    for (std::size_t i = 0; i < a.params.size(); ++i)
        CHECK(a.params[i].value.data == b.params[i].value.data);

    ModelBundle c = supcon::init_params(cfg, 43, 128, 128, 0);
    CHECK(a.find("encoder.stage1.conv.weight").value.data !=
          c.find("encoder.stage1.conv.weight").value.data);

    // head.fc1 weight is 128×128 = 16384 elements with fan_in 128.
    const Tensor<float>& w = a.find("head.fc1.weight").value;
    REQUIRE(w.numel() >= 10000);
    double mean = 0;
    for (float v : w.data) mean += v;
    mean /= static_cast<double>(w.numel());
    double var = 0;
    for (float v : w.data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(w.numel() - 1);
    const double expected = std::sqrt(2.0 / 128.0);
    CHECK(std::abs(std::sqrt(var) - expected) / expected <= 0.05);

    for (const NamedTensor<float>& p : a.params) {
        if (p.name.ends_with(".bias")) {
            for (float v : p.value.data) CHECK(v == 0.0f);
        }
    }
}

TEST_CASE("deep arch has strictly more parameters and a working forward") {
    EncoderConfig small = small_cfg();
    EncoderConfig deep = small;
    deep.arch = EncoderArch::kDeep;
    ModelBundle ms = supcon::init_params(small, 1, 16, 8, 0);
    ModelBundle md = supcon::init_params(deep, 1, 16, 8, 0);
    CHECK(md.param_count() > ms.param_count());

    GradTape<float> tape;
    ParamIds ids = supcon::record_params(tape, md, false);
    ValueId feats = supcon::encoder_forward(tape, deep, ids, tape.leaf(random_images(2, 5), false));
    CHECK(tape.value(feats).shape == std::vector<std::size_t>{2, 16});
}

TEST_CASE("desk-scale default encoder plus head stays under 100k parameters") {
    EncoderConfig cfg;  // defaults: small, width 8, feature_dim 128
    ModelBundle bundle = supcon::init_params(cfg, 1, 128, 128, 0);
    CHECK(bundle.param_count() < 100000);
}

TEST_CASE("discarding the head never alters encoder parameters") {
    EncoderConfig cfg = small_cfg();
    ModelBundle bundle = supcon::init_params(cfg, 9, 16, 8, 0);
    ModelBundle stripped = supcon::strip_to_encoder(bundle);
    CHECK(stripped.params.size() < bundle.params.size());
    for (const NamedTensor<float>& p : stripped.params) {
        CHECK(supcon::param_group(p.name) == "encoder");
        CHECK(p.value.data == bundle.find(p.name).value.data);
    }
    CHECK_FALSE(stripped.has_head());
    CHECK_FALSE(stripped.has_classifier());
}

TEST_CASE("encoder arch names round-trip") {
    CHECK(supcon::encoder_arch_from_name("small") == EncoderArch::kSmall);
    CHECK(supcon::encoder_arch_from_name("deep") == EncoderArch::kDeep);
    CHECK_THROWS_AS(supcon::encoder_arch_from_name("resnet50"), supcon::ValidationError);
}
