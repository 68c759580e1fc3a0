#include "supcon/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace supcon {

namespace {

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

void SweepGrid::validate() const {
    if (learning_rates.empty() || batch_sizes.empty()) {
        throw ValidationError("sweep: empty grid");
    }
    for (double lr : learning_rates)
        if (!(lr > 0.0)) throw ValidationError("sweep: learning rates must be positive");
    for (int b : batch_sizes)
        if (b < 1) throw ValidationError("sweep: batch sizes must be positive");
}

SweepSelection select_best(const std::vector<SweepPoint>& table) {
    if (table.empty()) throw ValidationError("sweep: empty table");
    const SweepPoint* best = &table[0];
    for (const SweepPoint& p : table) {
        if (p.val_accuracy > best->val_accuracy ||
            (p.val_accuracy == best->val_accuracy &&
             (p.lr < best->lr || (p.lr == best->lr && p.batch < best->batch)))) {
            best = &p;
        }
    }
    return {best->lr, best->batch};
}

SweepOutcome run_sweep(const SweepGrid& grid,
                       const std::function<double(double lr, int batch)>& probe_fn) {
    grid.validate();
    if (!probe_fn) throw ValidationError("sweep: missing probe function");
    SweepOutcome outcome;
    for (double lr : grid.learning_rates) {
        for (int batch : grid.batch_sizes) {
            outcome.table.push_back({lr, batch, probe_fn(lr, batch)});
        }
    }
    outcome.chosen = select_best(outcome.table);
    return outcome;
}

void write_sweep_trace(const std::vector<SweepPoint>& table, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError("sweep trace: cannot open " + path);
    out << "lr,batch,val_accuracy\n";
    char buf[96];
    for (const SweepPoint& p : table) {
        std::snprintf(buf, sizeof(buf), "%g,%d,%.4f\n", p.lr, p.batch, p.val_accuracy);
        out << buf;
    }
    if (!out) throw ValidationError("sweep trace: write failed for " + path);
}

void write_report(const RunReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError("report: cannot open " + path);
    out << "dataset,model,metric,mean,std,runs,lr,batch\n";
    char buf[160];
    std::vector<std::string> model_order;
    for (const ReportRow& row : report.rows) {
        if (std::find(model_order.begin(), model_order.end(), row.model) == model_order.end()) {
            model_order.push_back(row.model);
        }
        std::string std_text;
        if (row.stddev) {
            std::snprintf(buf, sizeof(buf), "%.4f", *row.stddev);
            std_text = buf;
        }
        std::snprintf(buf, sizeof(buf), "%s,%s,%s,%.4f,%s,%zu,%g,%d\n", row.dataset.c_str(),
                      row.model.c_str(), metric_kind_name(row.metric).c_str(), row.mean,
                      std_text.c_str(), row.run_accuracies.size(), row.lr, row.batch);
        out << buf;
    }
    for (const std::string& model : model_order) {
        double total = 0.0;
        std::size_t n = 0;
        for (const ReportRow& row : report.rows) {
            if (row.model != model) continue;
            total += row.mean;
            ++n;
        }
        std::snprintf(buf, sizeof(buf), "__mean__,%s,mean,%.4f,,%zu,,\n", model.c_str(),
                      total / static_cast<double>(n), n);
        out << buf;
    }
    if (!out) throw ValidationError("report: write failed for " + path);
}

RunReport read_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("report: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "dataset,model,metric,mean,std,runs,lr,batch") {
        throw ValidationError("report: bad header in " + path);
    }
    RunReport report;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string cell;
        ReportRow row;
        std::getline(fields, row.dataset, ',');
        std::getline(fields, row.model, ',');
        std::getline(fields, cell, ',');
        const std::string metric_text = cell;
        std::getline(fields, cell, ',');
        row.mean = std::stod(cell);
        std::getline(fields, cell, ',');
        if (!cell.empty()) row.stddev = std::stod(cell);
        std::getline(fields, cell, ',');
        const std::size_t runs = static_cast<std::size_t>(std::stoul(cell));
        std::getline(fields, cell, ',');
        if (!cell.empty()) row.lr = std::stod(cell);
        std::getline(fields, cell, ',');
        if (!cell.empty()) row.batch = std::stoi(cell);
        row.run_accuracies.assign(runs, row.mean);  // counts survive, raw runs do not
        if (metric_text != "mean") row.metric = metric_kind_from_name(metric_text);
        report.rows.push_back(std::move(row));
    }
    return report;
}

EvalProtocolResult linear_eval_protocol(const ModelBundle& pretrained, const ImageBank& bank,
                                        const std::string& dataset_name,
                                        const std::string& model_name,
                                        const EvalProtocolConfig& config) {
    config.grid.validate();
    if (config.runs < 1) throw ValidationError("protocol: runs must be >= 1");
    ModelBundle encoder = strip_to_encoder(pretrained);
    encoder.frozen_groups.insert("encoder");

    SplitSpec splits = derive_splits(bank, config.seed);
    if (splits.train.empty() || splits.val.empty()) {
        throw ValidationError("protocol: bank cannot provide train and val splits");
    }
    if (splits.test.empty()) throw ValidationError("protocol: bank carries no test split");

    FeatureSet train_set = extract_features(encoder, bank, splits.train);
    FeatureSet val_set = extract_features(encoder, bank, splits.val);
    FeatureSet test_set = extract_features(encoder, bank, splits.test);
    std::vector<std::uint32_t> train_val = splits.train;
    train_val.insert(train_val.end(), splits.val.begin(), splits.val.end());
    FeatureSet full_set = extract_features(encoder, bank, train_val);

    const int num_classes = static_cast<int>(bank.num_classes());
    auto probe_at = [&](const FeatureSet& data, double lr, int batch, std::uint64_t seed) {
        ProbeConfig probe;
        probe.lr = lr;
        probe.batch_size = batch;
        probe.epochs = config.probe_epochs;
        probe.momentum = config.probe_momentum;
        probe.seed = seed;
        return train_linear_probe(data, num_classes, probe);
    };

    SweepOutcome sweep = run_sweep(config.grid, [&](double lr, int batch) {
        LinearProbe probe = probe_at(train_set, lr, batch, mix64(config.seed));
        return metric_value(config.metric, probe_logits(probe, val_set.rows), val_set.labels,
                            num_classes);
    });

    EvalProtocolResult result;
    result.trace = sweep.table;
    result.final_train_size = full_set.labels.size();
    result.row.dataset = dataset_name;
    result.row.model = model_name;
    result.row.metric = config.metric;
    result.row.lr = sweep.chosen.lr;
    result.row.batch = sweep.chosen.batch;
    for (int run = 0; run < config.runs; ++run) {
        LinearProbe probe = probe_at(full_set, sweep.chosen.lr, sweep.chosen.batch,
                                     mix64(config.seed ^ (0x5eedULL + static_cast<std::uint64_t>(run))));
        result.row.run_accuracies.push_back(metric_value(
            config.metric, probe_logits(probe, test_set.rows), test_set.labels, num_classes));
    }
    const RunAggregate agg = aggregate_runs(result.row.run_accuracies);
    result.row.mean = agg.mean;
    result.row.stddev = agg.stddev;
    return result;
}

AblateKnob ablate_knob_from_name(const std::string& name) {
    if (name == "temperature") return AblateKnob::kTemperature;
    if (name == "augmentation") return AblateKnob::kAugmentation;
    if (name == "encoder") return AblateKnob::kEncoder;
    throw ValidationError("unknown ablation knob: " + name);
}

std::string ablate_knob_name(AblateKnob knob) {
    switch (knob) {
        case AblateKnob::kTemperature: return "temperature";
        case AblateKnob::kAugmentation: return "augmentation";
        case AblateKnob::kEncoder: return "encoder";
    }
    throw ValidationError("unknown ablation knob");
}

std::vector<std::string> default_ablate_values(AblateKnob knob) {
    switch (knob) {
        case AblateKnob::kTemperature:
            return {"0.04", "0.07", "0.10", "0.13", "0.17"};
        case AblateKnob::kAugmentation:
            return {"autoaugment", "randaugment", "simaugment", "stackedrandaugment"};
        case AblateKnob::kEncoder:
            return {"small", "deep"};
    }
    throw ValidationError("unknown ablation knob");
}

RunReport ablate(AblateKnob knob, const std::vector<std::string>& values,
                 const AblateInputs& inputs, const PretrainFn& pretrain_fn) {
    if (values.empty()) throw ValidationError("ablate: no knob values");
    if (inputs.pretrain_bank == nullptr) throw ValidationError("ablate: missing pretrain bank");
    if (inputs.eval_banks.empty()) throw ValidationError("ablate: no eval banks");
    const PretrainFn runner =
        pretrain_fn ? pretrain_fn : [](const ImageBank& bank, const TrainConfig& cfg) {
            return pretrain(bank, cfg).bundle;
        };

    RunReport report;
    for (const std::string& value : values) {
        TrainConfig cfg = inputs.base;
        switch (knob) {
            case AblateKnob::kTemperature:
                try {
                    cfg.tau = std::stod(value);
                } catch (const std::exception&) {
                    throw ValidationError("ablate: bad temperature value '" + value + "'");
                }
                break;
            case AblateKnob::kAugmentation:
                cfg.policy.strategy = aug_strategy_from_name(value);
                break;
            case AblateKnob::kEncoder:
                cfg.encoder.arch = encoder_arch_from_name(value);
                break;
        }
        ModelBundle pretrained = runner(*inputs.pretrain_bank, cfg);
        const std::string model = ablate_knob_name(knob) + "=" + value;
        for (const auto& [name, bank] : inputs.eval_banks) {
            report.rows.push_back(
                linear_eval_protocol(pretrained, *bank, name, model, inputs.eval).row);
        }
    }
    return report;
}

}  // namespace supcon
