#include "supcon/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <sstream>

namespace supcon {

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

namespace {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    if (shape.empty()) throw ValidationError("tensor: empty shape (use {1} for scalars)");
    std::size_t n = 1;
    for (std::size_t e : shape) {
        if (e == 0) throw ValidationError("tensor: zero extent in shape " + shape_str(shape));
        n *= e;
    }
    return n;
}

template <typename T>
void check_finite(const Tensor<T>& t, const char* op_name) {
    for (T v : t.data) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string(op_name) + ": non-finite value in output");
        }
    }
}

// Valid output positions per kernel offset: the tap ox·S + k - 1 must land
// inside [0, n). Hoisting the ranges keeps the hot loops branch-free, and
// the compile-time stride lets them vectorize.
struct TapRange {
    std::size_t lo[3], hi[3];  // hi exclusive
};

template <int S>
TapRange tap_range(std::size_t n, std::size_t on) {
    TapRange r;
    for (std::size_t k = 0; k < 3; ++k) {
        r.lo[k] = k == 0 ? 1 : 0;
        r.hi[k] = std::min(on, (n - k) / static_cast<std::size_t>(S) + 1);
    }
    return r;
}

template <typename T, int S>
void conv_forward(const T* __restrict x, const T* __restrict kernel, T* __restrict out,
                  std::size_t B, std::size_t C, std::size_t H, std::size_t W, std::size_t F,
                  std::size_t OH, std::size_t OW) {
    const TapRange rx = tap_range<S>(W, OW), ry = tap_range<S>(H, OH);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t f = 0; f < F; ++f) {
            T* oplane = out + (b * F + f) * OH * OW;
            for (std::size_t c = 0; c < C; ++c) {
                const T* iplane = x + (b * C + c) * H * W;
                const T* kbase = kernel + (f * C + c) * 9;
                for (std::size_t ky = 0; ky < 3; ++ky) {
                    for (std::size_t kx = 0; kx < 3; ++kx) {
                        const T kv = kbase[ky * 3 + kx];
                        for (std::size_t oy = ry.lo[ky]; oy < ry.hi[ky]; ++oy) {
                            const T* irow = iplane + (oy * S + ky - 1) * W;
                            T* orow = oplane + oy * OW;
                            for (std::size_t ox = rx.lo[kx]; ox < rx.hi[kx]; ++ox) {
                                orow[ox] += kv * irow[ox * S + kx - 1];
                            }
                        }
                    }
                }
            }
        }
    }
}

template <typename T, int S>
void conv_backward(const T* __restrict x, const T* __restrict kernel, const T* __restrict gout,
                   T* __restrict gx, T* __restrict gk, std::size_t B, std::size_t C,
                   std::size_t H, std::size_t W, std::size_t F, std::size_t OH, std::size_t OW) {
    const TapRange rx = tap_range<S>(W, OW), ry = tap_range<S>(H, OH);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t f = 0; f < F; ++f) {
            const T* gplane = gout + (b * F + f) * OH * OW;
            for (std::size_t c = 0; c < C; ++c) {
                const T* iplane = x + (b * C + c) * H * W;
                const T* kbase = kernel + (f * C + c) * 9;
                T* gxplane = gx ? gx + (b * C + c) * H * W : nullptr;
                T* gkbase = gk ? gk + (f * C + c) * 9 : nullptr;
                for (std::size_t ky = 0; ky < 3; ++ky) {
                    for (std::size_t kx = 0; kx < 3; ++kx) {
                        const T kv = kbase[ky * 3 + kx];
                        T kacc = 0;
                        for (std::size_t oy = ry.lo[ky]; oy < ry.hi[ky]; ++oy) {
                            const T* grow = gplane + oy * OW;
                            const std::size_t row = (oy * S + ky - 1) * W;
                            const T* irow = iplane + row;
                            if (gx) {
                                T* gxrow = gxplane + row;
                                for (std::size_t ox = rx.lo[kx]; ox < rx.hi[kx]; ++ox) {
                                    gxrow[ox * S + kx - 1] += grow[ox] * kv;
                                    kacc += grow[ox] * irow[ox * S + kx - 1];
                                }
                            } else {
                                for (std::size_t ox = rx.lo[kx]; ox < rx.hi[kx]; ++ox) {
                                    kacc += grow[ox] * irow[ox * S + kx - 1];
                                }
                            }
                        }
                        if (gk) gkbase[ky * 3 + kx] += kacc;
                    }
                }
            }
        }
    }
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(std::vector<std::size_t> s, std::vector<T> d)
    : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != data.size()) {
        throw ValidationError("tensor: shape " + shape_str(shape) + " does not match " +
                              std::to_string(data.size()) + " elements");
    }
}

template <typename T>
Tensor<T> Tensor<T>::zeros(std::vector<std::size_t> s) {
    return full(std::move(s), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::full(std::vector<std::size_t> s, T value) {
    std::size_t n = shape_numel(s);
    Tensor out;
    out.shape = std::move(s);
    out.data.assign(n, value);
    return out;
}

template <typename T>
ValueId GradTape<T>::push(Tensor<T> value, bool requires_grad,
                          std::function<void(GradTape&, ValueId)> backprop,
                          const char* op_name) {
    check_finite(value, op_name);
    nodes_.push_back(Node{std::move(value), requires_grad, std::move(backprop)});
    return static_cast<ValueId>(nodes_.size() - 1);
}

template <typename T>
bool GradTape<T>::any_requires(std::initializer_list<ValueId> ids) const {
    for (ValueId id : ids) {
        if (nodes_[id].requires_grad) return true;
    }
    return false;
}

template <typename T>
ValueId GradTape<T>::leaf(Tensor<T> value, bool requires_grad) {
    return push(std::move(value), requires_grad, nullptr, "leaf");
}

template <typename T>
const Tensor<T>& GradTape<T>::grad(ValueId id) const {
    if (!ran_backward_) throw ValidationError("tape: grad() before backward()");
    if (!nodes_[id].requires_grad) throw ValidationError("tape: grad() of a non-grad node");
    return grads_[id];
}

template <typename T>
void GradTape<T>::backward(ValueId output) {
    if (output >= nodes_.size()) throw ValidationError("tape: unknown output id");
    if (nodes_[output].value.numel() != 1) {
        throw ValidationError("tape: backward() needs a scalar output, got shape " +
                              shape_str(nodes_[output].value.shape));
    }
    grads_.clear();
    grads_.resize(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].requires_grad) grads_[i] = Tensor<T>::zeros(nodes_[i].value.shape);
    }
    ran_backward_ = true;
    if (!nodes_[output].requires_grad) return;
    grads_[output].data[0] = T(1);
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        const Node& n = nodes_[i];
        if (n.backprop && n.requires_grad) n.backprop(*this, static_cast<ValueId>(i));
    }
}

template <typename T>
ValueId GradTape<T>::matmul(ValueId a, ValueId b) {
    const Tensor<T>& A = nodes_[a].value;
    const Tensor<T>& B = nodes_[b].value;
    if (A.rank() != 2 || B.rank() != 2 || A.shape[1] != B.shape[0]) {
        throw ValidationError("matmul: incompatible shapes " + shape_str(A.shape) + " x " +
                              shape_str(B.shape));
    }
    const std::size_t m = A.shape[0], k = A.shape[1], n = B.shape[1];
    Tensor<T> out = Tensor<T>::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const T av = A.data[i * k + p];
            const T* brow = &B.data[p * n];
            T* orow = &out.data[i * n];
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    auto bp = [a, b, m, k, n](GradTape& t, ValueId self) {
        const Tensor<T>& g = t.grads_[self];
        const Tensor<T>& A2 = t.nodes_[a].value;
        const Tensor<T>& B2 = t.nodes_[b].value;
        if (t.nodes_[a].requires_grad) {  // dA = dC·Bᵀ
            Tensor<T>& ga = t.grads_[a];
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    T acc = 0;
                    for (std::size_t j = 0; j < n; ++j)
                        acc += g.data[i * n + j] * B2.data[p * n + j];
                    ga.data[i * k + p] += acc;
                }
        }
        if (t.nodes_[b].requires_grad) {  // dB = Aᵀ·dC
            Tensor<T>& gb = t.grads_[b];
            for (std::size_t p = 0; p < k; ++p)
                for (std::size_t i = 0; i < m; ++i) {
                    const T av = A2.data[i * k + p];
                    for (std::size_t j = 0; j < n; ++j)
                        gb.data[p * n + j] += av * g.data[i * n + j];
                }
        }
    };
    return push(std::move(out), any_requires({a, b}), bp, "matmul");
}

template <typename T>
ValueId GradTape<T>::matmul_nt(ValueId a, ValueId b) {
    const Tensor<T>& A = nodes_[a].value;
    const Tensor<T>& B = nodes_[b].value;
    if (A.rank() != 2 || B.rank() != 2 || A.shape[1] != B.shape[1]) {
        throw ValidationError("matmul_nt: incompatible shapes " + shape_str(A.shape) + " x " +
                              shape_str(B.shape) + "ᵀ");
    }
    const std::size_t m = A.shape[0], k = A.shape[1], n = B.shape[0];
    Tensor<T> out = Tensor<T>::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = &A.data[i * k];
        for (std::size_t j = 0; j < n; ++j) {
            const T* brow = &B.data[j * k];
            T acc = 0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            out.data[i * n + j] = acc;
        }
    }
    auto bp = [a, b, m, k, n](GradTape& t, ValueId self) {
        const Tensor<T>& g = t.grads_[self];
        const Tensor<T>& A2 = t.nodes_[a].value;
        const Tensor<T>& B2 = t.nodes_[b].value;
        if (t.nodes_[a].requires_grad) {  // dA = dC·B
            Tensor<T>& ga = t.grads_[a];
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    const T gv = g.data[i * n + j];
                    for (std::size_t p = 0; p < k; ++p)
                        ga.data[i * k + p] += gv * B2.data[j * k + p];
                }
        }
        if (t.nodes_[b].requires_grad) {  // dB = dCᵀ·A
            Tensor<T>& gb = t.grads_[b];
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    const T gv = g.data[i * n + j];
                    for (std::size_t p = 0; p < k; ++p)
                        gb.data[j * k + p] += gv * A2.data[i * k + p];
                }
        }
    };
    return push(std::move(out), any_requires({a, b}), bp, "matmul_nt");
}

template <typename T>
ValueId GradTape<T>::conv2d(ValueId input, ValueId kernel, int stride) {
    const Tensor<T>& X = nodes_[input].value;
    const Tensor<T>& K = nodes_[kernel].value;
    if (stride != 1 && stride != 2) throw ValidationError("conv2d: stride must be 1 or 2");
    if (X.rank() != 4 || K.rank() != 4) {
        throw ValidationError("conv2d: expected 4-D input and kernel");
    }
    if (K.shape[2] != 3 || K.shape[3] != 3) throw ValidationError("conv2d: kernels must be 3x3");
    if (X.shape[1] != K.shape[1]) {
        throw ValidationError("conv2d: channel mismatch, input " + shape_str(X.shape) +
                              " vs kernel " + shape_str(K.shape));
    }
    if (X.shape[2] < 3 || X.shape[3] < 3) throw ValidationError("conv2d: spatial dims must be >= 3");
    const std::size_t B = X.shape[0], C = X.shape[1], H = X.shape[2], W = X.shape[3];
    const std::size_t F = K.shape[0];
    const std::size_t s = static_cast<std::size_t>(stride);
    const std::size_t OH = (H - 1) / s + 1, OW = (W - 1) / s + 1;

    Tensor<T> out = Tensor<T>::zeros({B, F, OH, OW});
    if (stride == 1) {
        conv_forward<T, 1>(X.data.data(), K.data.data(), out.data.data(), B, C, H, W, F, OH, OW);
    } else {
        conv_forward<T, 2>(X.data.data(), K.data.data(), out.data.data(), B, C, H, W, F, OH, OW);
    }
    auto bp = [input, kernel, B, C, H, W, F, stride, OH, OW](GradTape& t, ValueId self) {
        const Tensor<T>& g = t.grads_[self];
        const Tensor<T>& X2 = t.nodes_[input].value;
        const Tensor<T>& K2 = t.nodes_[kernel].value;
        T* gx = t.nodes_[input].requires_grad ? t.grads_[input].data.data() : nullptr;
        T* gk = t.nodes_[kernel].requires_grad ? t.grads_[kernel].data.data() : nullptr;
        if (stride == 1) {
            conv_backward<T, 1>(X2.data.data(), K2.data.data(), g.data.data(), gx, gk, B, C, H, W,
                                F, OH, OW);
        } else {
            conv_backward<T, 2>(X2.data.data(), K2.data.data(), g.data.data(), gx, gk, B, C, H, W,
                                F, OH, OW);
        }
    };
    return push(std::move(out), any_requires({input, kernel}), bp, "conv2d");
}

template <typename T>
ValueId GradTape<T>::add(ValueId a, ValueId b) {
    const Tensor<T>& A = nodes_[a].value;
    const Tensor<T>& B = nodes_[b].value;
    if (!A.same_shape(B)) {
        throw ValidationError("add: shape mismatch " + shape_str(A.shape) + " vs " +
                              shape_str(B.shape));
    }
    Tensor<T> out = A;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += B.data[i];
    auto bp = [a, b](GradTape& t, ValueId self) {
        const Tensor<T>& g = t.grads_[self];
        for (ValueId in : {a, b}) {
            if (!t.nodes_[in].requires_grad) continue;
            Tensor<T>& gi = t.grads_[in];
            for (std::size_t i = 0; i < g.data.size(); ++i) gi.data[i] += g.data[i];
        }
    };
    return push(std::move(out), any_requires({a, b}), bp, "add");
}

template <typename T>
ValueId GradTape<T>::add_channel_bias(ValueId x, ValueId bias) {
    const Tensor<T>& X = nodes_[x].value;
    const Tensor<T>& Bv = nodes_[bias].value;
    if (X.rank() != 4 || Bv.rank() != 1 || Bv.shape[0] != X.shape[1]) {
        throw ValidationError("add_channel_bias: bias " + shape_str(Bv.shape) +
                              " does not match channels of " + shape_str(X.shape));
    }
    const std::size_t B = X.shape[0], C = X.shape[1], HW = X.shape[2] * X.shape[3];
    Tensor<T> out = X;
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c) {
            const T bv = Bv.data[c];
            T* plane = &out.data[(b * C + c) * HW];
            for (std::size_t i = 0; i < HW; ++i) plane[i] += bv;
        }
    auto bp = [x, bias, B, C, HW](GradTape& t, ValueId self) {
        const Tensor<T>& g = t.grads_[self];
        if (t.nodes_[x].requires_grad) {
            Tensor<T>& gx = t.grads_[x];
            for (std::size_t i = 0; i < g.data.size(); ++i) gx.data[i] += g.data[i];
        }
        if (t.nodes_[bias].requires_grad) {
            Tensor<T>& gb = t.grads_[bias];
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t c = 0; c < C; ++c) {
                    const T* plane = &g.data[(b * C + c) * HW];
                    T acc = 0;
                    for (std::size_t i = 0; i < HW; ++i) acc += plane[i];
                    gb.data[c] += acc;
                }
        }
    };
    return push(std::move(out), any_requires({x, bias}), bp, "add_channel_bias");
}

template <typename T>
ValueId GradTape<T>::dense(ValueId x, ValueId weight, ValueId bias) {
    {
        const Tensor<T>& X = nodes_[x].value;
        const Tensor<T>& W = nodes_[weight].value;
        const Tensor<T>& Bv = nodes_[bias].value;
        if (X.rank() != 2 || W.rank() != 2 || X.shape[1] != W.shape[0]) {
            throw ValidationError("dense: incompatible shapes " + shape_str(X.shape) + " x " +
                                  shape_str(W.shape));
        }
        if (Bv.rank() != 1 || Bv.shape[0] != W.shape[1]) {
            throw ValidationError("dense: bias " + shape_str(Bv.shape) +
                                  " does not match output dim");
        }
    }
    // matmul() may grow the node store, so re-fetch values after it.
    ValueId prod = matmul(x, weight);
    const Tensor<T>& Bv = nodes_[bias].value;
    const std::size_t m = nodes_[prod].value.shape[0], n = nodes_[prod].value.shape[1];
    Tensor<T> out = nodes_[prod].value;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] += Bv.data[j];
    auto bp = [prod, bias, m, n](GradTape& t, ValueId self) {
        const Tensor<T>& g = t.grads_[self];
        if (t.nodes_[prod].requires_grad) {
            Tensor<T>& gp = t.grads_[prod];
            for (std::size_t i = 0; i < g.data.size(); ++i) gp.data[i] += g.data[i];
        }
        if (t.nodes_[bias].requires_grad) {
            Tensor<T>& gb = t.grads_[bias];
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) gb.data[j] += g.data[i * n + j];
        }
    };
    return push(std::move(out), any_requires({prod, bias}), bp, "dense");
}

template <typename T>
ValueId GradTape<T>::relu(ValueId x) {
    const Tensor<T>& X = nodes_[x].value;
    Tensor<T> out = X;
    for (T& v : out.data) v = v > T(0) ? v : T(0);
    auto bp = [x](GradTape& t, ValueId self) {
        if (!t.nodes_[x].requires_grad) return;
        const Tensor<T>& g = t.grads_[self];
        const Tensor<T>& X2 = t.nodes_[x].value;
        Tensor<T>& gx = t.grads_[x];
        for (std::size_t i = 0; i < g.data.size(); ++i)
            if (X2.data[i] > T(0)) gx.data[i] += g.data[i];
    };
    return push(std::move(out), nodes_[x].requires_grad, bp, "relu");
}

template <typename T>
ValueId GradTape<T>::scale(ValueId x, T factor) {
    if (!std::isfinite(factor)) throw ValidationError("scale: non-finite factor");
    Tensor<T> out = nodes_[x].value;
    for (T& v : out.data) v *= factor;
    auto bp = [x, factor](GradTape& t, ValueId self) {
        if (!t.nodes_[x].requires_grad) return;
        const Tensor<T>& g = t.grads_[self];
        Tensor<T>& gx = t.grads_[x];
        for (std::size_t i = 0; i < g.data.size(); ++i) gx.data[i] += factor * g.data[i];
    };
    return push(std::move(out), nodes_[x].requires_grad, bp, "scale");
}

template <typename T>
ValueId GradTape<T>::global_avg_pool(ValueId x) {
    const Tensor<T>& X = nodes_[x].value;
    if (X.rank() != 4) throw ValidationError("global_avg_pool: expected 4-D input");
    const std::size_t B = X.shape[0], C = X.shape[1], HW = X.shape[2] * X.shape[3];
    Tensor<T> out = Tensor<T>::zeros({B, C});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c) {
            const T* plane = &X.data[(b * C + c) * HW];
            T acc = 0;
            for (std::size_t i = 0; i < HW; ++i) acc += plane[i];
            out.data[b * C + c] = acc / static_cast<T>(HW);
        }
    auto bp = [x, B, C, HW](GradTape& t, ValueId self) {
        if (!t.nodes_[x].requires_grad) return;
        const Tensor<T>& g = t.grads_[self];
        Tensor<T>& gx = t.grads_[x];
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t c = 0; c < C; ++c) {
                const T gv = g.data[b * C + c] / static_cast<T>(HW);
                T* plane = &gx.data[(b * C + c) * HW];
                for (std::size_t i = 0; i < HW; ++i) plane[i] += gv;
            }
    };
    return push(std::move(out), nodes_[x].requires_grad, bp, "global_avg_pool");
}

template <typename T>
ValueId GradTape<T>::l2_normalize_rows(ValueId x) {
    const Tensor<T>& X = nodes_[x].value;
    std::size_t rows, d;
    if (X.rank() == 1) {
        rows = 1;
        d = X.shape[0];
    } else if (X.rank() == 2) {
        rows = X.shape[0];
        d = X.shape[1];
    } else {
        throw ValidationError("l2_normalize_rows: expected 1-D or 2-D input");
    }
    std::vector<T> norms(rows);
    Tensor<T> out = X;
    for (std::size_t i = 0; i < rows; ++i) {
        const T* row = &X.data[i * d];
        T sq = 0;
        for (std::size_t j = 0; j < d; ++j) sq += row[j] * row[j];
        const T norm = std::sqrt(sq);
        if (norm <= T(1e-12)) {
            throw ValidationError("l2_normalize_rows: degenerate near-zero row " +
                                  std::to_string(i));
        }
        norms[i] = norm;
        T* orow = &out.data[i * d];
        for (std::size_t j = 0; j < d; ++j) orow[j] = row[j] / norm;
    }
    // d(x/‖x‖) pulls back as (g - y·(y·g)) / ‖x‖ per row, with y the unit row.
    auto bp = [x, rows, d, norms](GradTape& t, ValueId self) {
        if (!t.nodes_[x].requires_grad) return;
        const Tensor<T>& g = t.grads_[self];
        const Tensor<T>& Y = t.nodes_[self].value;
        Tensor<T>& gx = t.grads_[x];
        for (std::size_t i = 0; i < rows; ++i) {
            const T* yrow = &Y.data[i * d];
            const T* grow = &g.data[i * d];
            T dot = 0;
            for (std::size_t j = 0; j < d; ++j) dot += yrow[j] * grow[j];
            T* gxrow = &gx.data[i * d];
            for (std::size_t j = 0; j < d; ++j)
                gxrow[j] += (grow[j] - yrow[j] * dot) / norms[i];
        }
    };
    return push(std::move(out), nodes_[x].requires_grad, bp, "l2_normalize_rows");
}

template <typename T>
ValueId GradTape<T>::log_sum_exp(ValueId v) {
    const Tensor<T>& V = nodes_[v].value;
    if (V.rank() != 1) throw ValidationError("log_sum_exp: expected 1-D input");
    const std::size_t d = V.shape[0];
    T mx = V.data[0];
    for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, V.data[j]);
    T sum = 0;
    for (std::size_t j = 0; j < d; ++j) sum += std::exp(V.data[j] - mx);
    Tensor<T> out = Tensor<T>::scalar(mx + std::log(sum));
    auto bp = [v, d](GradTape& t, ValueId self) {
        if (!t.nodes_[v].requires_grad) return;
        const T g = t.grads_[self].data[0];
        const T lse = t.nodes_[self].value.data[0];
        const Tensor<T>& V2 = t.nodes_[v].value;
        Tensor<T>& gv = t.grads_[v];
        for (std::size_t j = 0; j < d; ++j) gv.data[j] += g * std::exp(V2.data[j] - lse);
    };
    return push(std::move(out), nodes_[v].requires_grad, bp, "log_sum_exp");
}

template <typename T>
ValueId GradTape<T>::row_log_sum_exp(ValueId m, bool exclude_diagonal) {
    const Tensor<T>& M = nodes_[m].value;
    if (M.rank() != 2) throw ValidationError("row_log_sum_exp: expected 2-D input");
    const std::size_t rows = M.shape[0], cols = M.shape[1];
    if (exclude_diagonal) {
        if (rows != cols) throw ValidationError("row_log_sum_exp: diagonal exclusion needs a square matrix");
        if (rows < 2) throw ValidationError("row_log_sum_exp: need at least two columns off-diagonal");
    }
    Tensor<T> out = Tensor<T>::zeros({rows});
    for (std::size_t i = 0; i < rows; ++i) {
        const T* row = &M.data[i * cols];
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < cols; ++j) {
            if (exclude_diagonal && j == i) continue;
            mx = std::max(mx, row[j]);
        }
        T sum = 0;
        for (std::size_t j = 0; j < cols; ++j) {
            if (exclude_diagonal && j == i) continue;
            sum += std::exp(row[j] - mx);
        }
        out.data[i] = mx + std::log(sum);
    }
    auto bp = [m, rows, cols, exclude_diagonal](GradTape& t, ValueId self) {
        if (!t.nodes_[m].requires_grad) return;
        const Tensor<T>& g = t.grads_[self];
        const Tensor<T>& lse = t.nodes_[self].value;
        const Tensor<T>& M2 = t.nodes_[m].value;
        Tensor<T>& gm = t.grads_[m];
        for (std::size_t i = 0; i < rows; ++i) {
            const T gv = g.data[i];
            if (gv == T(0)) continue;
            for (std::size_t j = 0; j < cols; ++j) {
                if (exclude_diagonal && j == i) continue;
                gm.data[i * cols + j] += gv * std::exp(M2.data[i * cols + j] - lse.data[i]);
            }
        }
    };
    return push(std::move(out), nodes_[m].requires_grad, bp, "row_log_sum_exp");
}

template <typename T>
ValueId GradTape<T>::inner(ValueId x, Tensor<T> weights) {
    const Tensor<T>& X = nodes_[x].value;
    if (!X.same_shape(weights)) {
        throw ValidationError("inner: weight shape " + shape_str(weights.shape) +
                              " does not match " + shape_str(X.shape));
    }
    T acc = 0;
    for (std::size_t i = 0; i < X.data.size(); ++i) acc += X.data[i] * weights.data[i];
    Tensor<T> out = Tensor<T>::scalar(acc);
    auto w = std::make_shared<Tensor<T>>(std::move(weights));
    auto bp = [x, w](GradTape& t, ValueId self) {
        if (!t.nodes_[x].requires_grad) return;
        const T g = t.grads_[self].data[0];
        Tensor<T>& gx = t.grads_[x];
        for (std::size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += g * w->data[i];
    };
    return push(std::move(out), nodes_[x].requires_grad, bp, "inner");
}

template <typename T>
T grad_check(const std::function<ValueId(GradTape<T>&, ValueId)>& build,
             const Tensor<T>& x, T step) {
    if (!(step > T(0))) throw ValidationError("grad_check: step must be positive");
    Tensor<T> analytic;
    {
        GradTape<T> tape;
        ValueId in = tape.leaf(x, true);
        ValueId out = build(tape, in);
        tape.backward(out);
        analytic = tape.grad(in);
    }
    auto eval = [&](const Tensor<T>& point) {
        GradTape<T> tape;
        ValueId in = tape.leaf(point, false);
        ValueId out = build(tape, in);
        const Tensor<T>& v = tape.value(out);
        if (v.numel() != 1) throw ValidationError("grad_check: function must be scalar-valued");
        return v.data[0];
    };
    T max_err = 0;
    Tensor<T> probe = x;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const T orig = probe.data[i];
        probe.data[i] = orig + step;
        const T fp = eval(probe);
        probe.data[i] = orig - step;
        const T fm = eval(probe);
        probe.data[i] = orig;
        const T numeric = (fp - fm) / (2 * step);
        const T a = analytic.data[i];
        const T denom = std::max(T(1), std::max(std::abs(a), std::abs(numeric)));
        max_err = std::max(max_err, std::abs(a - numeric) / denom);
    }
    return max_err;
}

template struct Tensor<float>;
template struct Tensor<double>;
template class GradTape<float>;
template class GradTape<double>;
template float grad_check<float>(const std::function<ValueId(GradTape<float>&, ValueId)>&,
                                 const Tensor<float>&, float);
template double grad_check<double>(const std::function<ValueId(GradTape<double>&, ValueId)>&,
                                   const Tensor<double>&, double);

}  // namespace supcon
