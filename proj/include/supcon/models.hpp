#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "supcon/tensor.hpp"

namespace supcon {

enum class EncoderArch { kSmall, kDeep };

EncoderArch encoder_arch_from_name(const std::string& name);
std::string encoder_arch_name(EncoderArch arch);

/// Four 3×3 conv stages over 3×32×32 input: stride 1 then three stride-2
/// downsamplings, relu activations, global average pool. kDeep adds a
/// stride-1 conv with a residual add per stage.
struct EncoderConfig {
    EncoderArch arch = EncoderArch::kSmall;
    int width = 8;          // channels of the first stage, doubled per stage
    int feature_dim = 128;  // channels of the last stage == feature size
    void validate() const;
    std::vector<int> stage_channels() const;
};

template <typename T>
struct NamedTensor {
    std::string name;  // "<group>.<layer>.<weight|bias>"
    Tensor<T> value;
};

/// Parameter bundle for encoder g, projection head h and/or a linear
/// classifier, with per-group freeze flags and checkpoint metadata.
struct ModelBundle {
    EncoderConfig encoder;
    int head_hidden_dim = 0;  // 0 when the bundle has no projection head
    int head_out_dim = 0;
    int num_classes = 0;  // 0 when the bundle has no classifier
    std::vector<NamedTensor<float>> params;
    std::set<std::string> frozen_groups;
    std::map<std::string, std::string> metadata;

    bool has_head() const { return head_out_dim > 0; }
    bool has_classifier() const { return num_classes > 0; }
    bool is_frozen(const std::string& group) const { return frozen_groups.count(group) > 0; }
    std::size_t param_count() const;
    const NamedTensor<float>& find(const std::string& name) const;
};

std::string param_group(const std::string& name);

/// Kaiming-style init: weights ~ Normal(0, sqrt(2/fan_in)), biases zero,
/// fully determined by the seed.
ModelBundle init_params(const EncoderConfig& cfg, std::uint64_t seed, int head_hidden_dim,
                        int head_out_dim, int num_classes);

/// Seeded parameter tensors for one bundle layout in any precision; the
/// float specialization is what init_params stores.
template <typename T>
std::vector<NamedTensor<T>> init_param_tensors(const EncoderConfig& cfg, std::uint64_t seed,
                                               int head_hidden_dim, int head_out_dim,
                                               int num_classes);

/// Drops head and classifier parameters, keeping the encoder bit-identical.
ModelBundle strip_to_encoder(const ModelBundle& bundle);

using ParamIds = std::map<std::string, ValueId>;

/// Records every parameter tensor as a tape leaf; frozen groups (and all
/// groups when train==false) become constant leaves.
template <typename T>
ParamIds record_params(GradTape<T>& tape, const std::vector<NamedTensor<T>>& params,
                       const std::set<std::string>& frozen_groups, bool train);

ParamIds record_params(GradTape<float>& tape, const ModelBundle& bundle, bool train);

/// images [B×3×32×32] with values in [0,1] -> features [B×feature_dim].
template <typename T>
ValueId encoder_forward(GradTape<T>& tape, const EncoderConfig& cfg, const ParamIds& ids,
                        ValueId images);

/// Two dense layers with relu between, then row L2 normalization.
template <typename T>
ValueId projection_forward(GradTape<T>& tape, const ParamIds& ids, ValueId features);

/// Single dense layer producing [B×K] logits.
template <typename T>
ValueId classifier_forward(GradTape<T>& tape, const ParamIds& ids, ValueId features);

extern template std::vector<NamedTensor<float>> init_param_tensors<float>(const EncoderConfig&,
                                                                          std::uint64_t, int, int,
                                                                          int);
extern template std::vector<NamedTensor<double>> init_param_tensors<double>(const EncoderConfig&,
                                                                            std::uint64_t, int,
                                                                            int, int);
extern template ParamIds record_params<float>(GradTape<float>&,
                                              const std::vector<NamedTensor<float>>&,
                                              const std::set<std::string>&, bool);
extern template ParamIds record_params<double>(GradTape<double>&,
                                               const std::vector<NamedTensor<double>>&,
                                               const std::set<std::string>&, bool);
extern template ValueId encoder_forward<float>(GradTape<float>&, const EncoderConfig&,
                                               const ParamIds&, ValueId);
extern template ValueId encoder_forward<double>(GradTape<double>&, const EncoderConfig&,
                                                const ParamIds&, ValueId);
extern template ValueId projection_forward<float>(GradTape<float>&, const ParamIds&, ValueId);
extern template ValueId projection_forward<double>(GradTape<double>&, const ParamIds&, ValueId);
extern template ValueId classifier_forward<float>(GradTape<float>&, const ParamIds&, ValueId);
extern template ValueId classifier_forward<double>(GradTape<double>&, const ParamIds&, ValueId);

}  // namespace supcon
