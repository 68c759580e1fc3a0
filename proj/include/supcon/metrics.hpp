#pragma once

#include <optional>
#include <string>
#include <vector>

#include "supcon/tensor.hpp"

namespace supcon {

/// Which accuracy a downstream dataset reports.
enum class MetricKind { kTop1, kMeanPerClass };

MetricKind metric_kind_from_name(const std::string& name);
std::string metric_kind_name(MetricKind kind);

/// Fraction of rows whose argmax matches the label; ties break to the
/// lowest index.
double top1_accuracy(const Tensor<float>& logits, const std::vector<int>& labels);

struct MeanPerClassResult {
    double accuracy = 0.0;
    int classes_present = 0;
    int classes_excluded = 0;  // classes absent from the labels
};

/// Unweighted mean of per-class recall over the classes present.
MeanPerClassResult mean_per_class_accuracy(const Tensor<float>& logits,
                                           const std::vector<int>& labels, int num_classes);

double metric_value(MetricKind kind, const Tensor<float>& logits, const std::vector<int>& labels,
                    int num_classes);

struct RunAggregate {
    double mean = 0.0;
    std::optional<double> stddev;  // sample (n-1) deviation; absent for n < 2
};

RunAggregate aggregate_runs(const std::vector<double>& accuracies);

}  // namespace supcon
