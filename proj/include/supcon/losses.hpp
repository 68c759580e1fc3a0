#pragma once

#include <cstdint>
#include <vector>

#include "supcon/tensor.hpp"

namespace supcon {

enum class Reduction { kSum, kMean };

/// A contrastive batch: 2N projection rows (not necessarily unit norm; the
/// loss re-normalizes internally), one integer label per row, and the
/// softmax temperature.
template <typename T>
struct SupConBatch {
    Tensor<T> projections;  // [2N×d]
    std::vector<int> labels;
    T temperature;
};

template <typename T>
struct CEBatch {
    Tensor<T> logits;  // [N×K]
    std::vector<int> labels;
    int num_classes;
};

/// mask[i*n+j] is true iff i != j and labels[i] == labels[j]. Row-major n×n.
std::vector<std::uint8_t> positive_mask(const std::vector<int>& labels);

/// Views with no same-label partner in the batch; they contribute zero loss.
std::size_t count_singleton_views(const std::vector<int>& labels);

/// Supervised contrastive loss over a tape value holding the projections.
/// Per view i with P_i positives: -1/P_i · Σ_{j∈pos(i)} log softmax over all
/// k≠i of sim(z_i,z_k)/τ evaluated at j, with rows normalized first.
/// Sum reduction adds the per-view terms; mean divides by the view count.
template <typename T>
ValueId supcon_loss(GradTape<T>& tape, ValueId projections, const std::vector<int>& labels,
                    T temperature, Reduction reduction);

/// Forward-only convenience wrapper over the tape implementation.
template <typename T>
T supcon_loss_value(const SupConBatch<T>& batch, Reduction reduction);

/// Literal double-loop transcription of the loss definition with naive exp.
/// Verification oracle: shares no code with supcon_loss. Sum reduction only.
double supcon_loss_bruteforce(const SupConBatch<double>& batch);

/// Multi-class cross-entropy: -Σ_i log softmax(s_i)[t_i], max-shifted.
template <typename T>
ValueId cross_entropy(GradTape<T>& tape, ValueId logits, const std::vector<int>& labels,
                      int num_classes, Reduction reduction);

template <typename T>
T cross_entropy_value(const CEBatch<T>& batch, Reduction reduction);

extern template ValueId supcon_loss<float>(GradTape<float>&, ValueId, const std::vector<int>&,
                                           float, Reduction);
extern template ValueId supcon_loss<double>(GradTape<double>&, ValueId, const std::vector<int>&,
                                            double, Reduction);
extern template float supcon_loss_value<float>(const SupConBatch<float>&, Reduction);
extern template double supcon_loss_value<double>(const SupConBatch<double>&, Reduction);
extern template ValueId cross_entropy<float>(GradTape<float>&, ValueId, const std::vector<int>&,
                                             int, Reduction);
extern template ValueId cross_entropy<double>(GradTape<double>&, ValueId, const std::vector<int>&,
                                              int, Reduction);
extern template float cross_entropy_value<float>(const CEBatch<float>&, Reduction);
extern template double cross_entropy_value<double>(const CEBatch<double>&, Reduction);

}  // namespace supcon
