#include "supcon/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "supcon/metrics.hpp"

namespace supcon {

namespace {

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t purpose) {
    return mix64(mix64(seed) ^ purpose);
}

}  // namespace

void ScheduleSpec::validate() const {
    if (!(base_lr > 0.0)) throw ValidationError("schedule: base_lr must be positive");
    if (warmup_epochs < 0) throw ValidationError("schedule: negative warmup");
    if (total_epochs < 1) throw ValidationError("schedule: total_epochs must be >= 1");
    if (!(decay_rate > 0.0)) throw ValidationError("schedule: decay_rate must be positive");
    int prev = warmup_epochs;
    for (int e : decay_epochs) {
        if (e <= prev) {
            throw ValidationError(
                "schedule: decay epochs must be strictly increasing and past the warmup");
        }
        prev = e;
    }
}

double lr_at_epoch(const ScheduleSpec& spec, int epoch) {
    spec.validate();
    if (epoch < 1 || epoch > spec.total_epochs) {
        throw ValidationError("lr_at_epoch: epoch " + std::to_string(epoch) +
                              " outside [1, " + std::to_string(spec.total_epochs) + "]");
    }
    if (spec.warmup_epochs > 0 && epoch <= spec.warmup_epochs) {
        return spec.base_lr * (static_cast<double>(epoch) / spec.warmup_epochs);
    }
    double lr = spec.base_lr;
    for (int e : spec.decay_epochs) {
        if (epoch >= e) lr *= spec.decay_rate;
    }
    return lr;
}

OptimState make_optim_state(const ModelBundle& bundle, const SgdConfig& config) {
    OptimState state;
    state.config = config;
    state.velocity.reserve(bundle.params.size());
    for (const NamedTensor<float>& p : bundle.params) {
        state.velocity.push_back(Tensor<float>::zeros(p.value.shape));
    }
    return state;
}

void sgd_step(ModelBundle& bundle, const std::vector<const Tensor<float>*>& grads,
              OptimState& state, double lr) {
    if (grads.size() != bundle.params.size() || state.velocity.size() != bundle.params.size()) {
        throw ValidationError("sgd_step: grad/velocity list does not match parameters");
    }
    if (!(lr > 0.0)) throw ValidationError("sgd_step: lr must be positive");
    const float momentum = static_cast<float>(state.config.momentum);
    const float wd = static_cast<float>(state.config.weight_decay);
    const float flr = static_cast<float>(lr);
    for (std::size_t i = 0; i < bundle.params.size(); ++i) {
        NamedTensor<float>& p = bundle.params[i];
        if (bundle.is_frozen(param_group(p.name))) continue;
        const Tensor<float>* g = grads[i];
        if (g == nullptr) continue;
        if (!g->same_shape(p.value)) {
            throw ValidationError("sgd_step: gradient shape mismatch for " + p.name);
        }
        Tensor<float>& v = state.velocity[i];
        for (std::size_t j = 0; j < p.value.data.size(); ++j) {
            const float gj = g->data[j];
            if (!std::isfinite(gj)) {
                throw NumericError("sgd_step: non-finite gradient in " + p.name);
            }
            v.data[j] = momentum * v.data[j] + (gj + wd * p.value.data[j]);
            p.value.data[j] -= flr * v.data[j];
        }
    }
}

TrainStage train_stage_from_name(const std::string& name) {
    if (name == "pretrain_supcon") return TrainStage::kPretrainSupCon;
    if (name == "pretrain_ce") return TrainStage::kPretrainCE;
    if (name == "linear_eval") return TrainStage::kLinearEval;
    throw ValidationError("unknown training stage: " + name);
}

std::string train_stage_name(TrainStage stage) {
    switch (stage) {
        case TrainStage::kPretrainSupCon: return "pretrain_supcon";
        case TrainStage::kPretrainCE: return "pretrain_ce";
        case TrainStage::kLinearEval: return "linear_eval";
    }
    throw ValidationError("unknown training stage");
}

void TrainConfig::validate() const {
    encoder.validate();
    schedule.validate();
    if (batch_size < 1) throw ValidationError("config: batch_size must be >= 1");
    if (stage == TrainStage::kPretrainSupCon) {
        if (!(tau > 0.0)) throw ValidationError("config: tau must be positive for SupCon");
        if (batch_size < 2) throw ValidationError("config: SupCon needs batch_size >= 2");
        if (head_out_dim < 1) throw ValidationError("config: SupCon needs a projection head");
    }
    if (checkpoint_every < 0) throw ValidationError("config: bad checkpoint interval");
}

namespace {

std::vector<std::uint32_t> pretrain_indices(const ImageBank& bank) {
    std::vector<std::uint32_t> idx;
    for (std::uint32_t i = 0; i < bank.records.size(); ++i) {
        if (bank.records[i].split != kSplitTest) idx.push_back(i);
    }
    return idx;
}

void fill_checkpoint_metadata(ModelBundle& bundle, const TrainConfig& config, int epoch) {
    bundle.metadata["stage"] = train_stage_name(config.stage);
    bundle.metadata["epoch"] = std::to_string(epoch);
    if (config.stage == TrainStage::kPretrainSupCon) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.17g", config.tau);
        bundle.metadata["tau"] = buf;
    }
    bundle.metadata["augment"] = aug_strategy_name(config.policy.strategy);
}

}  // namespace

PretrainResult pretrain(const ImageBank& bank, const TrainConfig& config) {
    config.validate();
    if (config.stage != TrainStage::kPretrainSupCon && config.stage != TrainStage::kPretrainCE) {
        throw ValidationError("pretrain: stage must be pretrain_supcon or pretrain_ce");
    }
    const bool supcon = config.stage == TrainStage::kPretrainSupCon;
    const int num_classes = static_cast<int>(bank.num_classes());
    const int hidden =
        config.head_hidden_dim > 0 ? config.head_hidden_dim : config.encoder.feature_dim;

    PretrainResult result;
    result.bundle = supcon
                        ? init_params(config.encoder, sub_seed(config.seed, 1), hidden,
                                      config.head_out_dim, 0)
                        : init_params(config.encoder, sub_seed(config.seed, 1), 0, 0, num_classes);
    OptimState optim = make_optim_state(result.bundle, config.sgd);

    const std::vector<std::uint32_t> indices = pretrain_indices(bank);
    if (indices.empty()) throw ValidationError("pretrain: bank has no trainable records");

    BatchOptions opts;
    opts.batch_size = config.batch_size;
    opts.shuffle_seed = sub_seed(config.seed, 2);
    opts.augment_seed = sub_seed(config.seed, 3);
    opts.views = supcon ? 2 : 1;
    opts.policy = config.policy;
    opts.drop_last = true;

    const std::size_t probe_batches =
        BatchStream(bank, indices, opts, 1).batches_per_epoch();
    if (probe_batches == 0) {
        throw ValidationError("pretrain: batch size exceeds the trainable record count");
    }

    for (int epoch = 1; epoch <= config.schedule.total_epochs; ++epoch) {
        const double lr = lr_at_epoch(config.schedule, epoch);
        BatchStream stream(bank, indices, opts, static_cast<std::uint64_t>(epoch));
        double loss_sum = 0.0;
        std::size_t batches = 0;
        while (auto batch = stream.next()) {
            GradTape<float> tape;
            ParamIds ids = record_params(tape, result.bundle, true);
            ValueId images = tape.leaf(std::move(batch->images), false);
            ValueId features = encoder_forward(tape, config.encoder, ids, images);
            ValueId loss;
            if (supcon) {
                result.singleton_views += count_singleton_views(batch->labels);
                ValueId proj = projection_forward(tape, ids, features);
                loss = supcon_loss(tape, proj, batch->labels, static_cast<float>(config.tau),
                                   Reduction::kMean);
            } else {
                ValueId logits = classifier_forward(tape, ids, features);
                loss = cross_entropy(tape, logits, batch->labels, num_classes, Reduction::kMean);
            }
            tape.backward(loss);
            std::vector<const Tensor<float>*> grads(result.bundle.params.size(), nullptr);
            for (std::size_t i = 0; i < result.bundle.params.size(); ++i) {
                const ValueId id = ids.at(result.bundle.params[i].name);
                if (tape.requires_grad(id)) grads[i] = &tape.grad(id);
            }
            sgd_step(result.bundle, grads, optim, lr);
            loss_sum += tape.value(loss).data[0];
            ++batches;
        }
        result.history.push_back(
            {epoch, lr, loss_sum / static_cast<double>(std::max<std::size_t>(1, batches))});
        if (!config.checkpoint_dir.empty() && config.checkpoint_every > 0 &&
            epoch % config.checkpoint_every == 0 && epoch != config.schedule.total_epochs) {
            fill_checkpoint_metadata(result.bundle, config, epoch);
            save_checkpoint(result.bundle, config.checkpoint_dir + "/checkpoint_epoch_" +
                                               std::to_string(epoch) + ".sckp");
        }
    }
    fill_checkpoint_metadata(result.bundle, config, config.schedule.total_epochs);
    if (!config.checkpoint_dir.empty()) {
        save_checkpoint(result.bundle, config.checkpoint_dir + "/checkpoint_final.sckp");
    }
    return result;
}

FeatureSet extract_features(const ModelBundle& bundle, const ImageBank& bank,
                            const std::vector<std::uint32_t>& indices) {
    if (indices.empty()) throw ValidationError("extract_features: empty index list");
    const std::size_t dim = static_cast<std::size_t>(bundle.encoder.feature_dim);
    FeatureSet out;
    out.rows = Tensor<float>::zeros({indices.size(), dim});
    out.labels.resize(indices.size());

    const std::size_t chunk = 256;
    for (std::size_t start = 0; start < indices.size(); start += chunk) {
        const std::size_t n = std::min(chunk, indices.size() - start);
        Tensor<float> images = Tensor<float>::zeros(
            {n, 3, static_cast<std::size_t>(bank.height), static_cast<std::size_t>(bank.width)});
        const std::size_t plane = images.numel() / n;
        for (std::size_t i = 0; i < n; ++i) {
            const Image img = record_to_image(bank, indices[start + i]);
            std::copy(img.data.begin(), img.data.end(),
                      images.data.begin() + static_cast<std::ptrdiff_t>(i * plane));
            out.labels[start + i] = bank.records[indices[start + i]].label;
        }
        GradTape<float> tape;
        ParamIds ids = record_params<float>(tape, bundle.params, {}, false);
        ValueId feats =
            encoder_forward(tape, bundle.encoder, ids, tape.leaf(std::move(images), false));
        const Tensor<float>& values = tape.value(feats);
        std::copy(values.data.begin(), values.data.end(),
                  out.rows.data.begin() + static_cast<std::ptrdiff_t>(start * dim));
    }
    return out;
}

LinearProbe train_linear_probe(const FeatureSet& train, int num_classes,
                               const ProbeConfig& config) {
    if (num_classes < 2) throw ValidationError("probe: need at least 2 classes");
    if (config.epochs < 1 || config.batch_size < 1 || !(config.lr > 0.0)) {
        throw ValidationError("probe: bad training configuration");
    }
    const std::size_t n = train.labels.size();
    const std::size_t dim = train.rows.shape[1];
    for (int t : train.labels) {
        if (t < 0 || t >= num_classes) throw ValidationError("probe: label out of range");
    }

    LinearProbe probe;
    probe.weight = Tensor<float>::zeros({dim, static_cast<std::size_t>(num_classes)});
    probe.bias = Tensor<float>::zeros({static_cast<std::size_t>(num_classes)});
    Tensor<float> vel_w = Tensor<float>::zeros(probe.weight.shape);
    Tensor<float> vel_b = Tensor<float>::zeros(probe.bias.shape);
    const float momentum = static_cast<float>(config.momentum);
    const float flr = static_cast<float>(config.lr);

    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::mt19937_64 rng(sub_seed(config.seed, static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t b = std::min(static_cast<std::size_t>(config.batch_size), n - start);
            Tensor<float> rows = Tensor<float>::zeros({b, dim});
            std::vector<int> labels(b);
            for (std::size_t i = 0; i < b; ++i) {
                const std::uint32_t src = order[start + i];
                std::copy(train.rows.data.begin() + static_cast<std::ptrdiff_t>(src * dim),
                          train.rows.data.begin() + static_cast<std::ptrdiff_t>((src + 1) * dim),
                          rows.data.begin() + static_cast<std::ptrdiff_t>(i * dim));
                labels[i] = train.labels[src];
            }
            GradTape<float> tape;
            ValueId w = tape.leaf(probe.weight, true);
            ValueId bias = tape.leaf(probe.bias, true);
            ValueId logits = tape.dense(tape.leaf(std::move(rows), false), w, bias);
            ValueId loss = cross_entropy(tape, logits, labels, num_classes, Reduction::kMean);
            tape.backward(loss);
            const Tensor<float>& gw = tape.grad(w);
            const Tensor<float>& gb = tape.grad(bias);
            for (std::size_t j = 0; j < probe.weight.data.size(); ++j) {
                if (!std::isfinite(gw.data[j])) throw NumericError("probe: non-finite gradient");
                vel_w.data[j] = momentum * vel_w.data[j] + gw.data[j];
                probe.weight.data[j] -= flr * vel_w.data[j];
            }
            for (std::size_t j = 0; j < probe.bias.data.size(); ++j) {
                if (!std::isfinite(gb.data[j])) throw NumericError("probe: non-finite gradient");
                vel_b.data[j] = momentum * vel_b.data[j] + gb.data[j];
                probe.bias.data[j] -= flr * vel_b.data[j];
            }
            loss_sum += tape.value(loss).data[0];
            ++batches;
        }
        probe.history.push_back(
            {epoch, config.lr, loss_sum / static_cast<double>(std::max<std::size_t>(1, batches))});
    }
    return probe;
}

Tensor<float> probe_logits(const LinearProbe& probe, const Tensor<float>& features) {
    GradTape<float> tape;
    ValueId logits = tape.dense(tape.leaf(features, false), tape.leaf(probe.weight, false),
                                tape.leaf(probe.bias, false));
    return tape.value(logits);
}

LinearEvalResult linear_eval(const ModelBundle& pretrained, const ImageBank& bank,
                             const TrainConfig& stage_config, const ProbeConfig& probe_config) {
    if (pretrained.encoder.feature_dim < 1) {
        throw ValidationError("linear_eval: pretrained bundle has no encoder");
    }
    ModelBundle encoder = strip_to_encoder(pretrained);
    encoder.frozen_groups.insert("encoder");

    SplitSpec splits = derive_splits(bank, stage_config.seed);
    if (splits.test.empty()) throw ValidationError("linear_eval: bank carries no test split");
    std::vector<std::uint32_t> train_val = splits.train;
    train_val.insert(train_val.end(), splits.val.begin(), splits.val.end());

    FeatureSet train_features = extract_features(encoder, bank, train_val);
    FeatureSet test_features = extract_features(encoder, bank, splits.test);

    const int num_classes = static_cast<int>(bank.num_classes());
    LinearEvalResult result;
    result.probe = train_linear_probe(train_features, num_classes, probe_config);
    Tensor<float> train_logits = probe_logits(result.probe, train_features.rows);
    result.test_logits = probe_logits(result.probe, test_features.rows);
    result.test_labels = test_features.labels;
    result.train_top1 = top1_accuracy(train_logits, train_features.labels);
    result.test_top1 = top1_accuracy(result.test_logits, result.test_labels);
    return result;
}

namespace {

constexpr char kCkptMagic[4] = {'S', 'C', 'K', 'P'};
constexpr std::uint8_t kCkptVersion = 1;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_str(std::vector<std::uint8_t>& out, const std::string& s) {
    if (s.size() > 0xffff) throw ValidationError("checkpoint: string too long");
    put_u16(out, static_cast<std::uint16_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
}

struct CkptReader {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;
    void need(std::size_t n) const {
        if (pos + n > bytes.size()) throw ValidationError("checkpoint: truncated file");
    }
    std::uint8_t u8() {
        need(1);
        return bytes[pos++];
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(bytes[pos] | (bytes[pos + 1] << 8));
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::string str() {
        const std::uint16_t n = u16();
        need(n);
        std::string s(reinterpret_cast<const char*>(&bytes[pos]), n);
        pos += n;
        return s;
    }
};

int meta_int(const std::map<std::string, std::string>& meta, const std::string& key) {
    auto it = meta.find(key);
    if (it == meta.end()) throw ValidationError("checkpoint: missing metadata key " + key);
    try {
        return std::stoi(it->second);
    } catch (const std::exception&) {
        throw ValidationError("checkpoint: bad integer for metadata key " + key);
    }
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const ModelBundle& bundle) {
    std::map<std::string, std::string> meta = bundle.metadata;
    meta["arch"] = encoder_arch_name(bundle.encoder.arch);
    meta["width"] = std::to_string(bundle.encoder.width);
    meta["feature_dim"] = std::to_string(bundle.encoder.feature_dim);
    meta["head_hidden_dim"] = std::to_string(bundle.head_hidden_dim);
    meta["head_out_dim"] = std::to_string(bundle.head_out_dim);
    meta["num_classes"] = std::to_string(bundle.num_classes);
    if (meta.size() > 0xffff) throw ValidationError("checkpoint: too much metadata");

    std::vector<std::uint8_t> out;
    out.insert(out.end(), kCkptMagic, kCkptMagic + 4);
    out.push_back(kCkptVersion);
    put_u16(out, static_cast<std::uint16_t>(meta.size()));
    for (const auto& [key, value] : meta) {
        put_str(out, key);
        put_str(out, value);
    }
    put_u32(out, static_cast<std::uint32_t>(bundle.params.size()));
    for (const NamedTensor<float>& p : bundle.params) {
        put_str(out, p.name);
        if (p.value.rank() > 0xff) throw ValidationError("checkpoint: tensor rank too large");
        out.push_back(static_cast<std::uint8_t>(p.value.rank()));
        for (std::size_t d : p.value.shape) put_u32(out, static_cast<std::uint32_t>(d));
        for (float v : p.value.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
}

ModelBundle deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
    CkptReader r{bytes};
    r.need(4);
    if (std::memcmp(&bytes[0], kCkptMagic, 4) != 0) throw ValidationError("checkpoint: bad magic");
    r.pos = 4;
    const std::uint8_t version = r.u8();
    if (version != kCkptVersion) {
        throw ValidationError("checkpoint: unsupported version " + std::to_string(version));
    }
    ModelBundle bundle;
    const std::uint16_t n_meta = r.u16();
    for (std::uint16_t i = 0; i < n_meta; ++i) {
        std::string key = r.str();
        bundle.metadata[key] = r.str();
    }
    const std::uint32_t n_tensors = r.u32();
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        NamedTensor<float> p;
        p.name = r.str();
        const std::uint8_t ndim = r.u8();
        std::vector<std::size_t> shape(ndim);
        std::size_t numel = 1;
        for (std::uint8_t d = 0; d < ndim; ++d) {
            shape[d] = r.u32();
            if (shape[d] == 0 || numel > (1u << 28) / std::max<std::size_t>(1, shape[d])) {
                throw ValidationError("checkpoint: implausible tensor shape");
            }
            numel *= shape[d];
        }
        std::vector<float> data(numel);
        for (std::size_t j = 0; j < numel; ++j) data[j] = std::bit_cast<float>(r.u32());
        p.value = Tensor<float>(std::move(shape), std::move(data));
        bundle.params.push_back(std::move(p));
    }
    if (r.pos != bytes.size()) throw ValidationError("checkpoint: trailing bytes");

    bundle.encoder.arch = encoder_arch_from_name(bundle.metadata.at("arch"));
    bundle.encoder.width = meta_int(bundle.metadata, "width");
    bundle.encoder.feature_dim = meta_int(bundle.metadata, "feature_dim");
    bundle.head_hidden_dim = meta_int(bundle.metadata, "head_hidden_dim");
    bundle.head_out_dim = meta_int(bundle.metadata, "head_out_dim");
    bundle.num_classes = meta_int(bundle.metadata, "num_classes");
    for (const char* key : {"arch", "width", "feature_dim", "head_hidden_dim", "head_out_dim",
                            "num_classes"}) {
        bundle.metadata.erase(key);
    }
    // The layout keys must reproduce the stored parameter shapes.
    const auto expected = init_param_tensors<float>(bundle.encoder, 0, bundle.head_hidden_dim,
                                                    bundle.head_out_dim, bundle.num_classes);
    if (expected.size() != bundle.params.size()) {
        throw ValidationError("checkpoint: parameter list does not match metadata layout");
    }
    for (std::size_t i = 0; i < expected.size(); ++i) {
        if (expected[i].name != bundle.params[i].name ||
            expected[i].value.shape != bundle.params[i].value.shape) {
            throw ValidationError("checkpoint: tensor " + bundle.params[i].name +
                                  " does not match metadata layout");
        }
    }
    return bundle;
}

void save_checkpoint(const ModelBundle& bundle, const std::string& path) {
    const std::vector<std::uint8_t> bytes = serialize_checkpoint(bundle);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("checkpoint: cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ValidationError("checkpoint: write failed for " + path);
}

ModelBundle load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("checkpoint: cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

void write_history(const std::vector<EpochStats>& history, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError("history: cannot open " + path + " for writing");
    out << "epoch,lr,mean_loss\n";
    char buf[96];
    for (const EpochStats& row : history) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", row.epoch, row.lr, row.mean_loss);
        out << buf;
    }
    if (!out) throw ValidationError("history: write failed for " + path);
}

}  // namespace supcon
