#include "supcon/metrics.hpp"

#include <cmath>

namespace supcon {

MetricKind metric_kind_from_name(const std::string& name) {
    if (name == "top1") return MetricKind::kTop1;
    if (name == "mean-per-class") return MetricKind::kMeanPerClass;
    throw ValidationError("unknown metric kind: " + name);
}

std::string metric_kind_name(MetricKind kind) {
    return kind == MetricKind::kTop1 ? "top1" : "mean-per-class";
}

namespace {

std::size_t argmax_row(const Tensor<float>& logits, std::size_t row) {
    const std::size_t k = logits.shape[1];
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
        if (logits.data[row * k + j] > logits.data[row * k + best]) best = j;
    }
    return best;
}

void check_inputs(const Tensor<float>& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2) throw ValidationError("accuracy: logits must be 2-D");
    if (logits.shape[0] != labels.size()) {
        throw ValidationError("accuracy: row/label count mismatch");
    }
    if (labels.empty()) throw ValidationError("accuracy: empty batch");
}

}  // namespace

double top1_accuracy(const Tensor<float>& logits, const std::vector<int>& labels) {
    check_inputs(logits, labels);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (argmax_row(logits, i) == static_cast<std::size_t>(labels[i])) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

MeanPerClassResult mean_per_class_accuracy(const Tensor<float>& logits,
                                           const std::vector<int>& labels, int num_classes) {
    check_inputs(logits, labels);
    if (num_classes < 1) throw ValidationError("accuracy: bad class count");
    std::vector<std::size_t> total(static_cast<std::size_t>(num_classes), 0);
    std::vector<std::size_t> correct(static_cast<std::size_t>(num_classes), 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int t = labels[i];
        if (t < 0 || t >= num_classes) {
            throw ValidationError("accuracy: label " + std::to_string(t) + " out of range");
        }
        ++total[static_cast<std::size_t>(t)];
        if (argmax_row(logits, i) == static_cast<std::size_t>(t))
            ++correct[static_cast<std::size_t>(t)];
    }
    MeanPerClassResult result;
    double acc = 0.0;
    for (int c = 0; c < num_classes; ++c) {
        if (total[static_cast<std::size_t>(c)] == 0) {
            ++result.classes_excluded;
            continue;
        }
        ++result.classes_present;
        acc += static_cast<double>(correct[static_cast<std::size_t>(c)]) /
               static_cast<double>(total[static_cast<std::size_t>(c)]);
    }
    result.accuracy = acc / static_cast<double>(result.classes_present);
    return result;
}

double metric_value(MetricKind kind, const Tensor<float>& logits, const std::vector<int>& labels,
                    int num_classes) {
    if (kind == MetricKind::kTop1) return top1_accuracy(logits, labels);
    return mean_per_class_accuracy(logits, labels, num_classes).accuracy;
}

RunAggregate aggregate_runs(const std::vector<double>& accuracies) {
    if (accuracies.empty()) throw ValidationError("aggregate_runs: no values");
    RunAggregate agg;
    for (double v : accuracies) agg.mean += v;
    agg.mean /= static_cast<double>(accuracies.size());
    if (accuracies.size() >= 2) {
        bool identical = true;
        double ss = 0.0;
        for (double v : accuracies) {
            identical = identical && v == accuracies[0];
            ss += (v - agg.mean) * (v - agg.mean);
        }
        agg.stddev =
            identical ? 0.0 : std::sqrt(ss / static_cast<double>(accuracies.size() - 1));
        if (identical) agg.mean = accuracies[0];
    }
    return agg;
}

}  // namespace supcon
