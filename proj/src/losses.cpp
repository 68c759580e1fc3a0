#include "supcon/losses.hpp"

#include <cmath>
#include <string>

namespace supcon {

std::vector<std::uint8_t> positive_mask(const std::vector<int>& labels) {
    const std::size_t n = labels.size();
    if (n < 2) throw ValidationError("positive_mask: need at least 2 views");
    std::vector<std::uint8_t> mask(n * n, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            mask[i * n + j] = (i != j && labels[i] == labels[j]) ? 1 : 0;
    return mask;
}

std::size_t count_singleton_views(const std::vector<int>& labels) {
    const std::size_t n = labels.size();
    std::size_t singletons = 0;
    for (std::size_t i = 0; i < n; ++i) {
        bool has_positive = false;
        for (std::size_t j = 0; j < n && !has_positive; ++j)
            has_positive = (i != j && labels[i] == labels[j]);
        if (!has_positive) ++singletons;
    }
    return singletons;
}

template <typename T>
ValueId supcon_loss(GradTape<T>& tape, ValueId projections, const std::vector<int>& labels,
                    T temperature, Reduction reduction) {
    const Tensor<T>& Z = tape.value(projections);
    if (Z.rank() != 2) throw ValidationError("supcon_loss: projections must be 2-D");
    const std::size_t n = Z.shape[0];
    if (n < 2) throw ValidationError("supcon_loss: need at least 2 views");
    if (labels.size() != n) {
        throw ValidationError("supcon_loss: " + std::to_string(labels.size()) +
                              " labels for " + std::to_string(n) + " rows");
    }
    if (!(temperature > T(0))) throw ValidationError("supcon_loss: temperature must be positive");

    const std::vector<std::uint8_t> mask = positive_mask(labels);
    std::vector<std::size_t> positives(n, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) positives[i] += mask[i * n + j];

    // With S the temperature-scaled similarity matrix, the per-view term is
    //   L_i = lse_{k≠i}(S_i·) - (1/P_i) Σ_{j∈pos(i)} S_ij
    // because the positive-averaged log denominators collapse to one lse.
    // Views without positives are dropped from both parts.
    ValueId unit = tape.l2_normalize_rows(projections);
    ValueId sims = tape.scale(tape.matmul_nt(unit, unit), T(1) / temperature);
    ValueId lse = tape.row_log_sum_exp(sims, /*exclude_diagonal=*/true);

    Tensor<T> pos_weights = Tensor<T>::zeros({n, n});
    Tensor<T> lse_weights = Tensor<T>::zeros({n});
    for (std::size_t i = 0; i < n; ++i) {
        if (positives[i] == 0) continue;
        lse_weights.data[i] = T(1);
        const T w = T(-1) / static_cast<T>(positives[i]);
        for (std::size_t j = 0; j < n; ++j)
            if (mask[i * n + j]) pos_weights.data[i * n + j] = w;
    }

    ValueId total = tape.add(tape.inner(sims, std::move(pos_weights)),
                             tape.inner(lse, std::move(lse_weights)));
    if (reduction == Reduction::kMean) total = tape.scale(total, T(1) / static_cast<T>(n));
    return total;
}

template <typename T>
T supcon_loss_value(const SupConBatch<T>& batch, Reduction reduction) {
    GradTape<T> tape;
    ValueId z = tape.leaf(batch.projections, false);
    return tape.value(supcon_loss(tape, z, batch.labels, batch.temperature, reduction)).data[0];
}

double supcon_loss_bruteforce(const SupConBatch<double>& batch) {
    const Tensor<double>& Z = batch.projections;
    if (Z.rank() != 2 || Z.shape[0] < 2) {
        throw ValidationError("supcon_loss_bruteforce: need a 2-D batch with >= 2 views");
    }
    const std::size_t n = Z.shape[0], d = Z.shape[1];
    if (batch.labels.size() != n) throw ValidationError("supcon_loss_bruteforce: label count");
    if (!(batch.temperature > 0.0)) {
        throw ValidationError("supcon_loss_bruteforce: temperature must be positive");
    }
    if (n > 64) throw ValidationError("supcon_loss_bruteforce: oracle capped at 64 views");

    std::vector<std::vector<double>> z(n, std::vector<double>(d));
    for (std::size_t i = 0; i < n; ++i) {
        double norm = 0.0;
        for (std::size_t c = 0; c < d; ++c) norm += Z.data[i * d + c] * Z.data[i * d + c];
        norm = std::sqrt(norm);
        if (norm <= 1e-12) throw ValidationError("supcon_loss_bruteforce: near-zero row");
        for (std::size_t c = 0; c < d; ++c) z[i][c] = Z.data[i * d + c] / norm;
    }
    auto sim = [&](std::size_t i, std::size_t j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < d; ++c) dot += z[i][c] * z[j][c];
        return dot;
    };

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t same = 0;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i && batch.labels[j] == batch.labels[i]) ++same;
        if (same == 0) continue;
        double term = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i || batch.labels[j] != batch.labels[i]) continue;
            double denom = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                if (k == i) continue;
                denom += std::exp(sim(i, k) / batch.temperature);
            }
            term += std::log(std::exp(sim(i, j) / batch.temperature) / denom);
        }
        total += -term / static_cast<double>(same);
    }
    return total;
}

template <typename T>
ValueId cross_entropy(GradTape<T>& tape, ValueId logits, const std::vector<int>& labels,
                      int num_classes, Reduction reduction) {
    const Tensor<T>& S = tape.value(logits);
    if (S.rank() != 2) throw ValidationError("cross_entropy: logits must be 2-D");
    const std::size_t n = S.shape[0], k = S.shape[1];
    if (num_classes < 2) throw ValidationError("cross_entropy: need at least 2 classes");
    if (k != static_cast<std::size_t>(num_classes)) {
        throw ValidationError("cross_entropy: logits have " + std::to_string(k) +
                              " columns, expected " + std::to_string(num_classes));
    }
    if (labels.size() != n) throw ValidationError("cross_entropy: label count mismatch");
    for (int t : labels) {
        if (t < 0 || t >= num_classes) {
            throw ValidationError("cross_entropy: label " + std::to_string(t) +
                                  " out of range [0, " + std::to_string(num_classes) + ")");
        }
    }

    // -log softmax(s_i)[t_i] = lse(s_i) - s_i[t_i]
    ValueId lse = tape.row_log_sum_exp(logits, /*exclude_diagonal=*/false);
    Tensor<T> pick = Tensor<T>::zeros({n, k});
    for (std::size_t i = 0; i < n; ++i)
        pick.data[i * k + static_cast<std::size_t>(labels[i])] = T(-1);
    ValueId total = tape.add(tape.inner(lse, Tensor<T>::full({n}, T(1))),
                             tape.inner(logits, std::move(pick)));
    if (reduction == Reduction::kMean) total = tape.scale(total, T(1) / static_cast<T>(n));
    return total;
}

template <typename T>
T cross_entropy_value(const CEBatch<T>& batch, Reduction reduction) {
    GradTape<T> tape;
    ValueId s = tape.leaf(batch.logits, false);
    return tape.value(cross_entropy(tape, s, batch.labels, batch.num_classes, reduction)).data[0];
}

template ValueId supcon_loss<float>(GradTape<float>&, ValueId, const std::vector<int>&, float,
                                    Reduction);
template ValueId supcon_loss<double>(GradTape<double>&, ValueId, const std::vector<int>&, double,
                                     Reduction);
template float supcon_loss_value<float>(const SupConBatch<float>&, Reduction);
template double supcon_loss_value<double>(const SupConBatch<double>&, Reduction);
template ValueId cross_entropy<float>(GradTape<float>&, ValueId, const std::vector<int>&, int,
                                      Reduction);
template ValueId cross_entropy<double>(GradTape<double>&, ValueId, const std::vector<int>&, int,
                                       Reduction);
template float cross_entropy_value<float>(const CEBatch<float>&, Reduction);
template double cross_entropy_value<double>(const CEBatch<double>&, Reduction);

}  // namespace supcon
