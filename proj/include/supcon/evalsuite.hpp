#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "supcon/metrics.hpp"
#include "supcon/trainer.hpp"

namespace supcon {

/// Hyperparameter grid swept per downstream dataset.
struct SweepGrid {
    std::vector<double> learning_rates = {0.1, 0.01, 0.001};
    std::vector<int> batch_sizes = {32, 64, 128};
    void validate() const;
};

struct SweepPoint {
    double lr = 0.0;
    int batch = 0;
    double val_accuracy = 0.0;
};

struct SweepSelection {
    double lr = 0.0;
    int batch = 0;
};

/// Picks the highest validation accuracy; ties break to the smaller lr,
/// then the smaller batch. Pure function of the table.
SweepSelection select_best(const std::vector<SweepPoint>& table);

struct SweepOutcome {
    std::vector<SweepPoint> table;  // grid order: lr-major, batch-minor
    SweepSelection chosen;
};

/// Evaluates probe_fn once per grid point and selects the best entry.
SweepOutcome run_sweep(const SweepGrid& grid,
                       const std::function<double(double lr, int batch)>& probe_fn);

/// Trace CSV: header `lr,batch,val_accuracy`.
void write_sweep_trace(const std::vector<SweepPoint>& table, const std::string& path);

struct ReportRow {
    std::string dataset;
    std::string model;
    MetricKind metric = MetricKind::kTop1;
    std::vector<double> run_accuracies;
    double mean = 0.0;
    std::optional<double> stddev;
    double lr = 0.0;
    int batch = 0;
};

struct RunReport {
    std::vector<ReportRow> rows;
};

/// Report CSV with header `dataset,model,metric,mean,std,runs,lr,batch`,
/// 4-decimal accuracy formatting, plus one cross-dataset `__mean__` row per
/// model averaging that model's dataset means.
void write_report(const RunReport& report, const std::string& path);
RunReport read_report(const std::string& path);

struct EvalProtocolConfig {
    SweepGrid grid;
    int runs = 5;
    MetricKind metric = MetricKind::kTop1;
    int probe_epochs = 50;
    double probe_momentum = 0.9;
    std::uint64_t seed = 0;
};

struct EvalProtocolResult {
    ReportRow row;
    std::vector<SweepPoint> trace;
    std::size_t final_train_size = 0;  // rows used for the post-sweep retrain
};

/// Full fixed-feature protocol on one bank: per grid point a probe trains on
/// the train split and is scored on val; the winner retrains on train+val
/// once per run (only the probe seed varies) and is scored on test.
EvalProtocolResult linear_eval_protocol(const ModelBundle& pretrained, const ImageBank& bank,
                                        const std::string& dataset_name,
                                        const std::string& model_name,
                                        const EvalProtocolConfig& config);

enum class AblateKnob { kTemperature, kAugmentation, kEncoder };

AblateKnob ablate_knob_from_name(const std::string& name);
std::string ablate_knob_name(AblateKnob knob);
std::vector<std::string> default_ablate_values(AblateKnob knob);

using PretrainFn = std::function<ModelBundle(const ImageBank&, const TrainConfig&)>;

struct AblateInputs {
    const ImageBank* pretrain_bank = nullptr;
    std::vector<std::pair<std::string, const ImageBank*>> eval_banks;
    TrainConfig base;
    EvalProtocolConfig eval;
};

/// Re-pretrains once per knob value (other hyperparameters constant) and
/// runs the full linear-eval protocol on every eval bank; one report row per
/// (value, bank). pretrain_fn defaults to the real trainer and exists so
/// tests can stub the expensive stage.
RunReport ablate(AblateKnob knob, const std::vector<std::string>& values,
                 const AblateInputs& inputs, const PretrainFn& pretrain_fn = {});

}  // namespace supcon
