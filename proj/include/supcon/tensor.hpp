#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "supcon/error.hpp"

namespace supcon {

/// Dense row-major n-dimensional array. Rank-0 is not supported; scalars are
/// shape {1}. float is the training precision, double the verification one.
template <typename T>
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<T> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, std::vector<T> d);

    static Tensor zeros(std::vector<std::size_t> s);
    static Tensor full(std::vector<std::size_t> s, T value);
    static Tensor scalar(T value) { return Tensor({1}, {value}); }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    // 2-D and 4-D accessors; callers index flat data directly in hot loops.
    T& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    T at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
    T& at(std::size_t b, std::size_t c, std::size_t y, std::size_t x) {
        return data[((b * shape[1] + c) * shape[2] + y) * shape[3] + x];
    }
    T at(std::size_t b, std::size_t c, std::size_t y, std::size_t x) const {
        return data[((b * shape[1] + c) * shape[2] + y) * shape[3] + x];
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.assign(data.begin(), data.end());
        return out;
    }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

std::string shape_str(const std::vector<std::size_t>& shape);

using ValueId = std::uint32_t;

/// Reverse-mode gradient tape. Ops append nodes in execution order, so every
/// node's inputs precede it; backward() walks the list once in reverse.
/// Forward outputs are checked finite; a NaN/Inf raises NumericError instead
/// of propagating.
template <typename T>
class GradTape {
public:
    ValueId leaf(Tensor<T> value, bool requires_grad = true);

    const Tensor<T>& value(ValueId id) const { return nodes_[id].value; }
    const Tensor<T>& grad(ValueId id) const;
    bool requires_grad(ValueId id) const { return nodes_[id].requires_grad; }
    std::size_t size() const { return nodes_.size(); }

    /// Seeds d(output)/d(output) = 1 and accumulates gradients into every
    /// node that requires them. `output` must be a scalar (numel 1).
    void backward(ValueId output);

    // ---- recorded operations ----
    ValueId matmul(ValueId a, ValueId b);     // [m×k]·[k×n] -> [m×n]
    ValueId matmul_nt(ValueId a, ValueId b);  // [m×k]·[n×k]ᵀ -> [m×n]
    /// Zero-padded (pad=1) cross-correlation with 3×3 kernels, stride 1 or 2.
    /// input [B×C×H×W], kernel [F×C×3×3] -> [B×F×H'×W'].
    ValueId conv2d(ValueId input, ValueId kernel, int stride);
    ValueId add(ValueId a, ValueId b);                 // same shapes
    ValueId add_channel_bias(ValueId x, ValueId bias); // x [B×C×H×W], bias [C]
    ValueId dense(ValueId x, ValueId weight, ValueId bias);  // x·W + b, rows
    ValueId relu(ValueId x);  // subgradient 0 at 0
    ValueId scale(ValueId x, T factor);
    ValueId global_avg_pool(ValueId x);  // [B×C×H×W] -> [B×C]
    /// Rows scaled to unit Euclidean norm. A row with norm <= 1e-12 is a
    /// degenerate input and raises ValidationError.
    ValueId l2_normalize_rows(ValueId x);
    ValueId log_sum_exp(ValueId v);  // 1-D -> scalar, max-shifted
    /// Per-row max-shifted log-sum-exp of a matrix; with exclude_diagonal the
    /// reduction in row i skips column i (matrix must be square).
    ValueId row_log_sum_exp(ValueId m, bool exclude_diagonal);
    /// Scalar Σ xᵢ·wᵢ against a constant weight tensor of identical shape.
    ValueId inner(ValueId x, Tensor<T> weights);

private:
    struct Node {
        Tensor<T> value;
        bool requires_grad = false;
        std::function<void(GradTape&, ValueId)> backprop;  // null for leaves
    };

    ValueId push(Tensor<T> value, bool requires_grad,
                 std::function<void(GradTape&, ValueId)> backprop,
                 const char* op_name);
    bool any_requires(std::initializer_list<ValueId> ids) const;
    Tensor<T>& grad_buf(ValueId id) { return grads_[id]; }

    std::vector<Node> nodes_;
    std::vector<Tensor<T>> grads_;
    bool ran_backward_ = false;
};

/// Compares the tape gradient of a scalar-valued function against central
/// finite differences (f(x+h)-f(x-h))/2h per coordinate. Returns the maximum
/// per-coordinate error |analytic-numeric| / max(1, |analytic|, |numeric|).
template <typename T>
T grad_check(const std::function<ValueId(GradTape<T>&, ValueId)>& build,
             const Tensor<T>& x, T step);

extern template struct Tensor<float>;
extern template struct Tensor<double>;
extern template class GradTape<float>;
extern template class GradTape<double>;
extern template float grad_check<float>(
    const std::function<ValueId(GradTape<float>&, ValueId)>&, const Tensor<float>&, float);
extern template double grad_check<double>(
    const std::function<ValueId(GradTape<double>&, ValueId)>&, const Tensor<double>&, double);

}  // namespace supcon
