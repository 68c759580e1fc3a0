#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "supcon/data.hpp"
#include "supcon/losses.hpp"
#include "supcon/models.hpp"

namespace supcon {

/// Linear warmup over the first warmup_epochs, then multiplicative drops of
/// decay_rate at each decay epoch. Epochs are 1-indexed.
struct ScheduleSpec {
    double base_lr = 0.1;
    int warmup_epochs = 10;
    std::vector<int> decay_epochs = {250, 350};
    double decay_rate = 0.1;
    int total_epochs = 400;
    void validate() const;
};

double lr_at_epoch(const ScheduleSpec& spec, int epoch);

struct SgdConfig {
    double momentum = 0.9;
    double weight_decay = 1e-4;
};

/// Per-parameter velocity buffers aligned with a bundle's parameter list.
struct OptimState {
    SgdConfig config;
    std::vector<Tensor<float>> velocity;
};

OptimState make_optim_state(const ModelBundle& bundle, const SgdConfig& config);

/// v <- momentum·v + (grad + weight_decay·param); param <- param - lr·v.
/// grads holds one entry per bundle parameter; null entries (frozen or
/// unused groups) are skipped. A non-finite gradient aborts.
void sgd_step(ModelBundle& bundle, const std::vector<const Tensor<float>*>& grads,
              OptimState& state, double lr);

enum class TrainStage { kPretrainSupCon, kPretrainCE, kLinearEval };

TrainStage train_stage_from_name(const std::string& name);
std::string train_stage_name(TrainStage stage);

struct TrainConfig {
    TrainStage stage = TrainStage::kPretrainSupCon;
    EncoderConfig encoder;
    int head_hidden_dim = 0;  // 0 -> feature_dim
    int head_out_dim = 128;
    int batch_size = 1024;
    double tau = 0.13;
    AugPolicy policy;
    std::uint64_t seed = 42;
    ScheduleSpec schedule;
    SgdConfig sgd;
    int checkpoint_every = 0;       // extra checkpoints every k epochs
    std::string checkpoint_dir;     // empty -> no files written
    void validate() const;
};

struct EpochStats {
    int epoch = 0;
    double lr = 0.0;
    double mean_loss = 0.0;
};

struct PretrainResult {
    ModelBundle bundle;
    std::vector<EpochStats> history;
    std::size_t singleton_views = 0;  // two-view batches keep this at zero
};

/// Stage-one training: SupCon on encoder+head over two-view batches, or
/// cross-entropy on encoder+classifier over single views. Trains on every
/// record not tagged test; partial batches are dropped.
PretrainResult pretrain(const ImageBank& bank, const TrainConfig& config);

/// Frozen-encoder features for the given records, raw pixels scaled to [0,1].
struct FeatureSet {
    Tensor<float> rows;  // [n×feature_dim]
    std::vector<int> labels;
};

FeatureSet extract_features(const ModelBundle& bundle, const ImageBank& bank,
                            const std::vector<std::uint32_t>& indices);

struct ProbeConfig {
    double lr = 0.1;
    int batch_size = 32;
    int epochs = 50;
    double momentum = 0.9;  // weight decay is fixed at zero in this stage
    std::uint64_t seed = 0;
};

struct LinearProbe {
    Tensor<float> weight;  // [feature_dim×K]
    Tensor<float> bias;    // [K]
    std::vector<EpochStats> history;
};

/// Trains a linear classifier on fixed features with cross-entropy,
/// constant lr, keeping partial batches.
LinearProbe train_linear_probe(const FeatureSet& train, int num_classes,
                               const ProbeConfig& config);

Tensor<float> probe_logits(const LinearProbe& probe, const Tensor<float>& features);

struct LinearEvalResult {
    LinearProbe probe;
    double train_top1 = 0.0;
    double test_top1 = 0.0;
    Tensor<float> test_logits;
    std::vector<int> test_labels;
};

/// Stage-two protocol on one bank: encoder frozen bit-exactly, head
/// discarded, a fresh classifier trained on the train+val records and scored
/// on the test records. Any augmentation policy in the config is ignored —
/// this stage never augments.
LinearEvalResult linear_eval(const ModelBundle& pretrained, const ImageBank& bank,
                             const TrainConfig& stage_config, const ProbeConfig& probe_config);

/// Bit-exact little-endian checkpoint format, magic "SCKP", version 1.
void save_checkpoint(const ModelBundle& bundle, const std::string& path);
ModelBundle load_checkpoint(const std::string& path);
std::vector<std::uint8_t> serialize_checkpoint(const ModelBundle& bundle);
ModelBundle deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

/// History CSV: header `epoch,lr,mean_loss`, one row per epoch.
void write_history(const std::vector<EpochStats>& history, const std::string& path);

}  // namespace supcon
