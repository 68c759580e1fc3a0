#include "supcon/models.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace supcon {

EncoderArch encoder_arch_from_name(const std::string& name) {
    if (name == "small") return EncoderArch::kSmall;
    if (name == "deep") return EncoderArch::kDeep;
    throw ValidationError("unknown encoder arch: " + name);
}

std::string encoder_arch_name(EncoderArch arch) {
    return arch == EncoderArch::kSmall ? "small" : "deep";
}

void EncoderConfig::validate() const {
    if (width < 1) throw ValidationError("encoder: width must be >= 1");
    if (feature_dim < 8) throw ValidationError("encoder: feature_dim must be >= 8");
    // Three stride-2 stages: 32 -> 16 -> 8 -> 4. 32 % 8 == 0 always holds;
    // the check guards against future input-size changes.
    if (32 % 8 != 0) throw ValidationError("encoder: input not divisible by total stride");
}

std::vector<int> EncoderConfig::stage_channels() const {
    return {width, 2 * width, 4 * width, feature_dim};
}

std::string param_group(const std::string& name) {
    const std::size_t dot = name.find('.');
    if (dot == std::string::npos) throw ValidationError("param name without group: " + name);
    return name.substr(0, dot);
}

std::size_t ModelBundle::param_count() const {
    std::size_t n = 0;
    for (const NamedTensor<float>& p : params) n += p.value.numel();
    return n;
}

const NamedTensor<float>& ModelBundle::find(const std::string& name) const {
    for (const NamedTensor<float>& p : params)
        if (p.name == name) return p;
    throw ValidationError("bundle: no parameter named " + name);
}

namespace {

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

template <typename T>
Tensor<T> kaiming_weight(std::vector<std::size_t> shape, std::size_t fan_in,
                         std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    Tensor<T> t = Tensor<T>::zeros(std::move(shape));
    for (T& v : t.data) v = static_cast<T>(dist(rng));
    return t;
}

}  // namespace

template <typename T>
std::vector<NamedTensor<T>> init_param_tensors(const EncoderConfig& cfg, std::uint64_t seed,
                                               int head_hidden_dim, int head_out_dim,
                                               int num_classes) {
    cfg.validate();
    if ((head_hidden_dim > 0) != (head_out_dim > 0)) {
        throw ValidationError("init_params: head dims must both be set or both zero");
    }
    std::mt19937_64 rng(mix64(seed));
    std::vector<NamedTensor<T>> params;
    auto conv = [&](const std::string& name, int out_ch, int in_ch) {
        params.push_back({name + ".weight",
                          kaiming_weight<T>({static_cast<std::size_t>(out_ch),
                                             static_cast<std::size_t>(in_ch), 3, 3},
                                            static_cast<std::size_t>(in_ch) * 9, rng)});
        params.push_back({name + ".bias", Tensor<T>::zeros({static_cast<std::size_t>(out_ch)})});
    };
    auto fc = [&](const std::string& name, int in_dim, int out_dim) {
        params.push_back({name + ".weight",
                          kaiming_weight<T>({static_cast<std::size_t>(in_dim),
                                             static_cast<std::size_t>(out_dim)},
                                            static_cast<std::size_t>(in_dim), rng)});
        params.push_back({name + ".bias", Tensor<T>::zeros({static_cast<std::size_t>(out_dim)})});
    };

    const std::vector<int> channels = cfg.stage_channels();
    int in_ch = 3;
    for (std::size_t s = 0; s < channels.size(); ++s) {
        const std::string stage = "encoder.stage" + std::to_string(s + 1);
        conv(stage + ".conv", channels[s], in_ch);
        if (cfg.arch == EncoderArch::kDeep) conv(stage + ".conv_b", channels[s], channels[s]);
        in_ch = channels[s];
    }
    if (head_out_dim > 0) {
        fc("head.fc1", cfg.feature_dim, head_hidden_dim);
        fc("head.fc2", head_hidden_dim, head_out_dim);
    }
    if (num_classes > 0) fc("classifier.fc", cfg.feature_dim, num_classes);
    return params;
}

ModelBundle init_params(const EncoderConfig& cfg, std::uint64_t seed, int head_hidden_dim,
                        int head_out_dim, int num_classes) {
    ModelBundle bundle;
    bundle.encoder = cfg;
    bundle.head_hidden_dim = head_hidden_dim;
    bundle.head_out_dim = head_out_dim;
    bundle.num_classes = num_classes;
    bundle.params = init_param_tensors<float>(cfg, seed, head_hidden_dim, head_out_dim,
                                              num_classes);
    return bundle;
}

ModelBundle strip_to_encoder(const ModelBundle& bundle) {
    ModelBundle out;
    out.encoder = bundle.encoder;
    out.metadata = bundle.metadata;
    for (const NamedTensor<float>& p : bundle.params)
        if (param_group(p.name) == "encoder") out.params.push_back(p);
    return out;
}

template <typename T>
ParamIds record_params(GradTape<T>& tape, const std::vector<NamedTensor<T>>& params,
                       const std::set<std::string>& frozen_groups, bool train) {
    ParamIds ids;
    for (const NamedTensor<T>& p : params) {
        const bool requires_grad = train && frozen_groups.count(param_group(p.name)) == 0;
        ids[p.name] = tape.leaf(p.value, requires_grad);
    }
    return ids;
}

ParamIds record_params(GradTape<float>& tape, const ModelBundle& bundle, bool train) {
    return record_params<float>(tape, bundle.params, bundle.frozen_groups, train);
}

namespace {

ValueId require_id(const ParamIds& ids, const std::string& name) {
    auto it = ids.find(name);
    if (it == ids.end()) throw ValidationError("forward: missing parameter " + name);
    return it->second;
}

}  // namespace

template <typename T>
ValueId encoder_forward(GradTape<T>& tape, const EncoderConfig& cfg, const ParamIds& ids,
                        ValueId images) {
    const Tensor<T>& x = tape.value(images);
    if (x.rank() != 4 || x.shape[1] != 3 || x.shape[2] != 32 || x.shape[3] != 32) {
        throw ValidationError("encoder_forward: expected [B×3×32×32] input, got " +
                              shape_str(x.shape));
    }
    ValueId cur = images;
    const std::vector<int> channels = cfg.stage_channels();
    for (std::size_t s = 0; s < channels.size(); ++s) {
        const std::string stage = "encoder.stage" + std::to_string(s + 1);
        const int stride = s == 0 ? 1 : 2;
        ValueId conv = tape.conv2d(cur, require_id(ids, stage + ".conv.weight"), stride);
        cur = tape.relu(tape.add_channel_bias(conv, require_id(ids, stage + ".conv.bias")));
        if (cfg.arch == EncoderArch::kDeep) {
            ValueId refine =
                tape.conv2d(cur, require_id(ids, stage + ".conv_b.weight"), 1);
            refine = tape.add_channel_bias(refine, require_id(ids, stage + ".conv_b.bias"));
            cur = tape.relu(tape.add(refine, cur));
        }
    }
    return tape.global_avg_pool(cur);
}

template <typename T>
ValueId projection_forward(GradTape<T>& tape, const ParamIds& ids, ValueId features) {
    ValueId hidden = tape.relu(tape.dense(features, require_id(ids, "head.fc1.weight"),
                                          require_id(ids, "head.fc1.bias")));
    ValueId out = tape.dense(hidden, require_id(ids, "head.fc2.weight"),
                             require_id(ids, "head.fc2.bias"));
    return tape.l2_normalize_rows(out);
}

template <typename T>
ValueId classifier_forward(GradTape<T>& tape, const ParamIds& ids, ValueId features) {
    return tape.dense(features, require_id(ids, "classifier.fc.weight"),
                      require_id(ids, "classifier.fc.bias"));
}

template std::vector<NamedTensor<float>> init_param_tensors<float>(const EncoderConfig&,
                                                                   std::uint64_t, int, int, int);
template std::vector<NamedTensor<double>> init_param_tensors<double>(const EncoderConfig&,
                                                                     std::uint64_t, int, int, int);
template ParamIds record_params<float>(GradTape<float>&, const std::vector<NamedTensor<float>>&,
                                       const std::set<std::string>&, bool);
template ParamIds record_params<double>(GradTape<double>&,
                                        const std::vector<NamedTensor<double>>&,
                                        const std::set<std::string>&, bool);
template ValueId encoder_forward<float>(GradTape<float>&, const EncoderConfig&, const ParamIds&,
                                        ValueId);
template ValueId encoder_forward<double>(GradTape<double>&, const EncoderConfig&, const ParamIds&,
                                         ValueId);
template ValueId projection_forward<float>(GradTape<float>&, const ParamIds&, ValueId);
template ValueId projection_forward<double>(GradTape<double>&, const ParamIds&, ValueId);
template ValueId classifier_forward<float>(GradTape<float>&, const ParamIds&, ValueId);
template ValueId classifier_forward<double>(GradTape<double>&, const ParamIds&, ValueId);

}  // namespace supcon
