#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ynet/error.hpp"
#include "ynet/tensor.hpp"

// Differentiable operations over Tensor. Every op computes its value eagerly
// and, when a GradTape is active and any input requires grad, records a
// backward rule that accumulates (additively) into the inputs' grad buffers.

namespace ynet {

namespace detail {

inline bool tracking(std::initializer_list<const Tensor*> inputs) {
    if (!GradTape::active()) return false;
    for (const Tensor* t : inputs) {
        if (t->defined() && t->requires_grad()) return true;
    }
    return false;
}

inline void mark_tracked(Tensor& out, std::function<void()> rule) {
    out.set_requires_grad(true);
    GradTape::active()->record(std::move(rule));
}

// True when `inner` equals the trailing axes of `outer`. Row-major layout
// then makes broadcast indexing a plain modulo by numel(inner).
inline bool is_suffix_shape(const Shape& outer, const Shape& inner) {
    if (inner.size() > outer.size()) return false;
    return std::equal(inner.rbegin(), inner.rend(), outer.rbegin());
}

template <class F, class DfA, class DfB>
Tensor ew_binary(const Tensor& a, const Tensor& b, F f, DfA dfa, DfB dfb, const char* name) {
    const Tensor *big = &a, *small = &b;
    if (a.shape() != b.shape()) {
        if (is_suffix_shape(a.shape(), b.shape())) {
            big = &a;
            small = &b;
        } else if (is_suffix_shape(b.shape(), a.shape())) {
            big = &b;
            small = &a;
        } else {
            throw ShapeError(std::string(name) + ": shapes " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()) + " are not broadcast-compatible");
        }
    }
    const std::size_t n = big->size();
    const std::size_t na = a.size();
    const std::size_t nb = b.size();
    std::vector<double> out(n);
    const auto& av = a.data();
    const auto& bv = b.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i % na], bv[i % nb]);

    Tensor result = Tensor::from(big->shape(), std::move(out));
    if (tracking({&a, &b})) {
        Tensor ta = a, tb = b, to = result;
        mark_tracked(result, [ta, tb, to, dfa, dfb, n, na, nb]() mutable {
            const auto& g = to.grad();
            const auto& av = ta.data();
            const auto& bv = tb.data();
            if (ta.requires_grad()) {
                auto& ga = ta.mutable_grad();
                for (std::size_t i = 0; i < n; ++i) ga[i % na] += g[i] * dfa(av[i % na], bv[i % nb]);
            }
            if (tb.requires_grad()) {
                auto& gb = tb.mutable_grad();
                for (std::size_t i = 0; i < n; ++i) gb[i % nb] += g[i] * dfb(av[i % na], bv[i % nb]);
            }
        });
    }
    return result;
}

template <class F, class Df>
Tensor ew_unary(const Tensor& x, F f, Df df) {
    std::vector<double> out(x.size());
    const auto& xv = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
    Tensor result = Tensor::from(x.shape(), std::move(out));
    if (tracking({&x})) {
        Tensor tx = x, to = result;
        mark_tracked(result, [tx, to, df]() mutable {
            if (!tx.requires_grad()) return;
            const auto& g = to.grad();
            const auto& xv = tx.data();
            auto& gx = tx.mutable_grad();
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xv[i]);
        });
    }
    return result;
}

// C[M,N] += A[M,K] * B[K,N]
inline void mm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aik = a[i * k + p];
            if (aik == 0.0) continue;
            const double* brow = b + p * n;
            double* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
}

// C[M,K] += G[M,N] * B[K,N]^T
inline void mm_nt(const double* g, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double* grow = g + i * n;
            const double* brow = b + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            c[i * k + p] += acc;
        }
    }
}

// C[K,N] += A[M,K]^T * G[M,N]
inline void mm_tn(const double* a, const double* g, double* c, std::size_t m, std::size_t k,
                  std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aik = a[i * k + p];
            if (aik == 0.0) continue;
            double* crow = c + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aik * grow[j];
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic (suffix broadcasting: the smaller operand's shape
// must equal the trailing axes of the larger; scalars broadcast everywhere).

inline Tensor add(const Tensor& a, const Tensor& b) {
    return detail::ew_binary(
        a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; }, "add");
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    return detail::ew_binary(
        a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; }, "sub");
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    return detail::ew_binary(
        a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; }, "mul");
}

inline Tensor add_scalar(const Tensor& x, double c) {
    return detail::ew_unary(x, [c](double v) { return v + c; }, [](double) { return 1.0; });
}

inline Tensor mul_scalar(const Tensor& x, double c) {
    return detail::ew_unary(x, [c](double v) { return v * c; }, [c](double) { return c; });
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator+(const Tensor& a, double c) { return add_scalar(a, c); }
inline Tensor operator-(const Tensor& a, double c) { return add_scalar(a, -c); }
inline Tensor operator*(const Tensor& a, double c) { return mul_scalar(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return mul_scalar(a, c); }
inline Tensor operator/(const Tensor& a, double c) { return mul_scalar(a, 1.0 / c); }
inline Tensor operator-(const Tensor& a) { return mul_scalar(a, -1.0); }

// ---------------------------------------------------------------------------
// Activations

inline Tensor relu(const Tensor& x) {
    return detail::ew_unary(
        x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

// tanh approximation of GeLU
inline Tensor gelu(const Tensor& x) {
    constexpr double kC = 0.044715;
    constexpr double kS = 0.7978845608028654;  // sqrt(2/pi)
    return detail::ew_unary(
        x,
        [](double v) {
            const double u = kS * (v + kC * v * v * v);
            return 0.5 * v * (1.0 + std::tanh(u));
        },
        [](double v) {
            const double u = kS * (v + kC * v * v * v);
            const double t = std::tanh(u);
            const double du = kS * (1.0 + 3.0 * kC * v * v);
            return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
        });
}

// identity activation
inline Tensor linear(const Tensor& x) { return x; }

inline Tensor sin(const Tensor& x) {
    return detail::ew_unary(
        x, [](double v) { return std::sin(v); }, [](double v) { return std::cos(v); });
}

inline Tensor log(const Tensor& x) {
    return detail::ew_unary(
        x, [](double v) { return std::log(v); }, [](double v) { return 1.0 / v; });
}

inline Tensor abs(const Tensor& x) {
    return detail::ew_unary(
        x, [](double v) { return std::abs(v); },
        [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

inline Tensor clamp_min(const Tensor& x, double lo) {
    return detail::ew_unary(
        x, [lo](double v) { return v < lo ? lo : v; }, [lo](double v) { return v > lo ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Batched matrix product. a: (..., M, K), b: (..., K, N). Leading batch axes
// must match exactly, or one operand may be a plain rank-2 matrix shared
// across the other's batches.

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || b.rank() < 2) {
        throw ShapeError("matmul requires rank >= 2 operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
    const std::size_t m = a.extent(a.rank() - 2);
    const std::size_t k = a.extent(a.rank() - 1);
    const std::size_t kb = b.extent(b.rank() - 2);
    const std::size_t n = b.extent(b.rank() - 1);
    if (k != kb) {
        throw ShapeError("matmul inner dimensions disagree: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    Shape batch_a(a.shape().begin(), a.shape().end() - 2);
    Shape batch_b(b.shape().begin(), b.shape().end() - 2);
    Shape batch;
    if (batch_a == batch_b) {
        batch = batch_a;
    } else if (batch_b.empty()) {
        batch = batch_a;
    } else if (batch_a.empty()) {
        batch = batch_b;
    } else {
        throw ShapeError("matmul batch dimensions not broadcastable: " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
    }
    const std::size_t nbatch = numel(batch);
    const bool a_batched = !batch_a.empty();
    const bool b_batched = !batch_b.empty();

    Shape out_shape = batch;
    out_shape.push_back(m);
    out_shape.push_back(n);
    std::vector<double> out(numel(out_shape), 0.0);
    const auto& av = a.data();
    const auto& bv = b.data();
    for (std::size_t beta = 0; beta < nbatch; ++beta) {
        detail::mm_nn(av.data() + (a_batched ? beta * m * k : 0),
                      bv.data() + (b_batched ? beta * k * n : 0), out.data() + beta * m * n, m, k, n);
    }

    Tensor result = Tensor::from(std::move(out_shape), std::move(out));
    if (detail::tracking({&a, &b})) {
        Tensor ta = a, tb = b, to = result;
        detail::mark_tracked(result, [ta, tb, to, m, k, n, nbatch, a_batched, b_batched]() mutable {
            const auto& g = to.grad();
            for (std::size_t beta = 0; beta < nbatch; ++beta) {
                const double* gp = g.data() + beta * m * n;
                if (ta.requires_grad()) {
                    detail::mm_nt(gp, tb.data().data() + (b_batched ? beta * k * n : 0),
                                  ta.mutable_grad().data() + (a_batched ? beta * m * k : 0), m, k, n);
                }
                if (tb.requires_grad()) {
                    detail::mm_tn(ta.data().data() + (a_batched ? beta * m * k : 0), gp,
                                  tb.mutable_grad().data() + (b_batched ? beta * k * n : 0), m, k, n);
                }
            }
        });
    }
    return result;
}

// ---------------------------------------------------------------------------
// Shape manipulation

inline Tensor reshape(const Tensor& x, Shape shape) {
    if (numel(shape) != x.size()) {
        throw ShapeError("reshape from " + shape_str(x.shape()) + " to " + shape_str(shape) +
                         " changes element count");
    }
    Tensor result = Tensor::from(std::move(shape), x.data());
    if (detail::tracking({&x})) {
        Tensor tx = x, to = result;
        detail::mark_tracked(result, [tx, to]() mutable {
            if (tx.requires_grad()) tx.accumulate_grad(to.grad());
        });
    }
    return result;
}

namespace detail {

// For each flat output index, the corresponding flat input index under an
// axis permutation out.shape[i] = in.shape[axes[i]].
inline std::vector<std::size_t> permute_map(const Shape& in_shape, const std::vector<std::size_t>& axes) {
    const std::size_t r = in_shape.size();
    std::vector<std::size_t> in_strides(r, 1);
    for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];
    std::vector<std::size_t> out_extent(r), stride_for_out_axis(r);
    for (std::size_t i = 0; i < r; ++i) {
        out_extent[i] = in_shape[axes[i]];
        stride_for_out_axis[i] = in_strides[axes[i]];
    }
    const std::size_t n = numel(in_shape);
    std::vector<std::size_t> map(n);
    std::vector<std::size_t> counter(r, 0);
    std::size_t src = 0;
    for (std::size_t i = 0; i < n; ++i) {
        map[i] = src;
        for (std::size_t ax = r; ax-- > 0;) {
            if (++counter[ax] < out_extent[ax]) {
                src += stride_for_out_axis[ax];
                break;
            }
            src -= stride_for_out_axis[ax] * (out_extent[ax] - 1);
            counter[ax] = 0;
        }
    }
    return map;
}

}  // namespace detail

inline Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
    const std::size_t r = x.rank();
    if (axes.size() != r) throw ShapeError("permute axes rank mismatch");
    std::vector<bool> seen(r, false);
    for (std::size_t a : axes) {
        if (a >= r || seen[a]) throw ShapeError("permute axes must be a permutation");
        seen[a] = true;
    }
    auto map = detail::permute_map(x.shape(), axes);
    Shape out_shape(r);
    for (std::size_t i = 0; i < r; ++i) out_shape[i] = x.shape()[axes[i]];
    std::vector<double> out(x.size());
    const auto& xv = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[map[i]];
    Tensor result = Tensor::from(std::move(out_shape), std::move(out));
    if (detail::tracking({&x})) {
        Tensor tx = x, to = result;
        detail::mark_tracked(result, [tx, to, map = std::move(map)]() mutable {
            if (!tx.requires_grad()) return;
            const auto& g = to.grad();
            auto& gx = tx.mutable_grad();
            for (std::size_t i = 0; i < g.size(); ++i) gx[map[i]] += g[i];
        });
    }
    return result;
}

inline Tensor transpose_last2(const Tensor& x) {
    std::vector<std::size_t> axes(x.rank());
    for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
    std::swap(axes[axes.size() - 1], axes[axes.size() - 2]);
    return permute(x, axes);
}

// Appends a new trailing axis of extent n, repeating each element.
inline Tensor expand_tail(const Tensor& x, std::size_t n) {
    if (n == 0) throw ShapeError("expand_tail requires n >= 1");
    Shape out_shape = x.shape();
    out_shape.push_back(n);
    std::vector<double> out(x.size() * n);
    const auto& xv = x.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
        std::fill(out.begin() + i * n, out.begin() + (i + 1) * n, xv[i]);
    }
    Tensor result = Tensor::from(std::move(out_shape), std::move(out));
    if (detail::tracking({&x})) {
        Tensor tx = x, to = result;
        detail::mark_tracked(result, [tx, to, n]() mutable {
            if (!tx.requires_grad()) return;
            const auto& g = to.grad();
            auto& gx = tx.mutable_grad();
            for (std::size_t i = 0; i < gx.size(); ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j];
                gx[i] += acc;
            }
        });
    }
    return result;
}

inline Tensor slice_last(const Tensor& x, std::size_t start, std::size_t len) {
    if (x.rank() == 0) throw ShapeError("slice_last requires rank >= 1");
    const std::size_t last = x.extent(x.rank() - 1);
    if (len == 0 || start + len > last) {
        throw ShapeError("slice_last [" + std::to_string(start) + "," + std::to_string(start + len) +
                         ") out of range for axis extent " + std::to_string(last));
    }
    Shape out_shape = x.shape();
    out_shape.back() = len;
    const std::size_t rows = x.size() / last;
    std::vector<double> out(rows * len);
    const auto& xv = x.data();
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy(xv.begin() + r * last + start, xv.begin() + r * last + start + len,
                  out.begin() + r * len);
    }
    Tensor result = Tensor::from(std::move(out_shape), std::move(out));
    if (detail::tracking({&x})) {
        Tensor tx = x, to = result;
        detail::mark_tracked(result, [tx, to, start, len, last, rows]() mutable {
            if (!tx.requires_grad()) return;
            const auto& g = to.grad();
            auto& gx = tx.mutable_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t j = 0; j < len; ++j) gx[r * last + start + j] += g[r * len + j];
            }
        });
    }
    return result;
}

inline Tensor concat_last(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_last needs at least one tensor");
    const Shape& head = parts[0].shape();
    if (head.empty()) throw ShapeError("concat_last requires rank >= 1");
    std::size_t total_last = 0;
    for (const Tensor& t : parts) {
        if (t.rank() != head.size() ||
            !std::equal(head.begin(), head.end() - 1, t.shape().begin())) {
            throw ShapeError("concat_last: shape " + shape_str(t.shape()) +
                             " incompatible with " + shape_str(head));
        }
        total_last += t.shape().back();
    }
    Shape out_shape = head;
    out_shape.back() = total_last;
    const std::size_t rows = numel(out_shape) / total_last;
    std::vector<double> out(rows * total_last);
    std::size_t offset = 0;
    for (const Tensor& t : parts) {
        const std::size_t w = t.shape().back();
        const auto& tv = t.data();
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy(tv.begin() + r * w, tv.begin() + (r + 1) * w,
                      out.begin() + r * total_last + offset);
        }
        offset += w;
    }
    Tensor result = Tensor::from(std::move(out_shape), std::move(out));
    bool track = false;
    for (const Tensor& t : parts) {
        if (detail::tracking({&t})) track = true;
    }
    if (track) {
        std::vector<Tensor> tp = parts;
        Tensor to = result;
        detail::mark_tracked(result, [tp = std::move(tp), to, rows, total_last]() mutable {
            const auto& g = to.grad();
            std::size_t offset = 0;
            for (Tensor& t : tp) {
                const std::size_t w = t.shape().back();
                if (t.requires_grad()) {
                    auto& gt = t.mutable_grad();
                    for (std::size_t r = 0; r < rows; ++r) {
                        for (std::size_t j = 0; j < w; ++j) gt[r * w + j] += g[r * total_last + offset + j];
                    }
                }
                offset += w;
            }
        });
    }
    return result;
}

// ---------------------------------------------------------------------------
// Normalization and regularization

inline Tensor softmax(const Tensor& x, int axis) {
    const int r = static_cast<int>(x.rank());
    int a = axis < 0 ? r + axis : axis;
    if (a < 0 || a >= r) {
        throw ShapeError("softmax axis " + std::to_string(axis) + " invalid for rank " +
                         std::to_string(r));
    }
    std::size_t inner = 1, outer = 1;
    for (int i = a + 1; i < r; ++i) inner *= x.extent(i);
    for (int i = 0; i < a; ++i) outer *= x.extent(i);
    const std::size_t n = x.extent(a);

    std::vector<double> out(x.size());
    const auto& xv = x.data();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * n * inner + in;
            double mx = xv[base];
            for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xv[base + j * inner]);
            double sum = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                const double e = std::exp(xv[base + j * inner] - mx);
                out[base + j * inner] = e;
                sum += e;
            }
            for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= sum;
        }
    }
    Tensor result = Tensor::from(x.shape(), std::move(out));
    if (detail::tracking({&x})) {
        Tensor tx = x, to = result;
        detail::mark_tracked(result, [tx, to, outer, inner, n]() mutable {
            if (!tx.requires_grad()) return;
            const auto& g = to.grad();
            const auto& y = to.data();
            auto& gx = tx.mutable_grad();
            for (std::size_t o = 0; o < outer; ++o) {
                for (std::size_t in = 0; in < inner; ++in) {
                    const std::size_t base = o * n * inner + in;
                    double dot = 0.0;
                    for (std::size_t j = 0; j < n; ++j) dot += g[base + j * inner] * y[base + j * inner];
                    for (std::size_t j = 0; j < n; ++j) {
                        const std::size_t k = base + j * inner;
                        gx[k] += y[k] * (g[k] - dot);
                    }
                }
            }
        });
    }
    return result;
}

// Zero-mean unit-variance over the last axis, then a per-channel affine map.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                         double epsilon = 1e-5) {
    if (x.rank() == 0) throw ShapeError("layer_norm requires rank >= 1");
    const std::size_t d = x.extent(x.rank() - 1);
    if (gain.rank() != 1 || bias.rank() != 1 || gain.extent(0) != d || bias.extent(0) != d) {
        throw ShapeError("layer_norm gain/bias must have shape (" + std::to_string(d) + ")");
    }
    const std::size_t npos = x.size() / d;
    std::vector<double> out(x.size());
    std::vector<double> xhat(x.size());
    std::vector<double> inv_sigma(npos);
    const auto& xv = x.data();
    const auto& gv = gain.data();
    const auto& bv = bias.data();
    for (std::size_t p = 0; p < npos; ++p) {
        const double* row = xv.data() + p * d;
        double mean = 0.0;
        for (std::size_t i = 0; i < d; ++i) mean += row[i];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double c = row[i] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + epsilon);
        inv_sigma[p] = inv;
        for (std::size_t i = 0; i < d; ++i) {
            const double h = (row[i] - mean) * inv;
            xhat[p * d + i] = h;
            out[p * d + i] = gv[i] * h + bv[i];
        }
    }
    Tensor result = Tensor::from(x.shape(), std::move(out));
    if (detail::tracking({&x, &gain, &bias})) {
        Tensor tx = x, tg = gain, tb = bias, to = result;
        detail::mark_tracked(result, [tx, tg, tb, to, xhat = std::move(xhat),
                                      inv_sigma = std::move(inv_sigma), npos, d]() mutable {
            const auto& g = to.grad();
            const auto& gv = tg.data();
            for (std::size_t p = 0; p < npos; ++p) {
                const double* grow = g.data() + p * d;
                const double* hrow = xhat.data() + p * d;
                if (tx.requires_grad()) {
                    auto& gx = tx.mutable_grad();
                    double mq = 0.0, mqh = 0.0;
                    for (std::size_t i = 0; i < d; ++i) {
                        const double q = grow[i] * gv[i];
                        mq += q;
                        mqh += q * hrow[i];
                    }
                    mq /= static_cast<double>(d);
                    mqh /= static_cast<double>(d);
                    for (std::size_t i = 0; i < d; ++i) {
                        const double q = grow[i] * gv[i];
                        gx[p * d + i] += inv_sigma[p] * (q - mq - hrow[i] * mqh);
                    }
                }
                if (tg.requires_grad()) {
                    auto& gg = tg.mutable_grad();
                    for (std::size_t i = 0; i < d; ++i) gg[i] += grow[i] * hrow[i];
                }
                if (tb.requires_grad()) {
                    auto& gb = tb.mutable_grad();
                    for (std::size_t i = 0; i < d; ++i) gb[i] += grow[i];
                }
            }
        });
    }
    return result;
}

// Inverted dropout: at train time survivors are scaled by 1/(1-p) so that
// evaluation is a pure identity.
inline Tensor dropout(const Tensor& x, double p_drop, bool training, Rng& rng) {
    if (p_drop < 0.0 || p_drop >= 1.0) {
        throw ConfigError("dropout probability must lie in [0,1), got " + std::to_string(p_drop));
    }
    if (!training || p_drop == 0.0) return x;
    const double scale = 1.0 / (1.0 - p_drop);
    std::vector<double> mask(x.size());
    for (auto& m : mask) m = uniform01(rng) < p_drop ? 0.0 : scale;
    std::vector<double> out(x.size());
    const auto& xv = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];
    Tensor result = Tensor::from(x.shape(), std::move(out));
    if (detail::tracking({&x})) {
        Tensor tx = x, to = result;
        detail::mark_tracked(result, [tx, to, mask = std::move(mask)]() mutable {
            if (!tx.requires_grad()) return;
            const auto& g = to.grad();
            auto& gx = tx.mutable_grad();
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
        });
    }
    return result;
}

// ---------------------------------------------------------------------------
// Reductions and indexing

inline Tensor sum_all(const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    Tensor result = Tensor::scalar(s);
    if (detail::tracking({&x})) {
        Tensor tx = x, to = result;
        detail::mark_tracked(result, [tx, to]() mutable {
            if (!tx.requires_grad()) return;
            const double g = to.grad()[0];
            for (auto& v : tx.mutable_grad()) v += g;
        });
    }
    return result;
}

inline Tensor mean_all(const Tensor& x) {
    if (x.size() == 0) throw ShapeError("mean_all of empty tensor");
    return sum_all(x) * (1.0 / static_cast<double>(x.size()));
}

// out[b] = x[b, indices[b]] over the last axis; used to pick per-sample class
// probabilities.
inline Tensor select_index_last(const Tensor& x, const std::vector<std::size_t>& indices) {
    if (x.rank() == 0) throw ShapeError("select_index_last requires rank >= 1");
    const std::size_t c = x.extent(x.rank() - 1);
    const std::size_t rows = x.size() / c;
    if (indices.size() != rows) {
        throw ShapeError("select_index_last: " + std::to_string(indices.size()) + " indices for " +
                         std::to_string(rows) + " rows");
    }
    for (std::size_t i : indices) {
        if (i >= c) {
            throw DataError("index " + std::to_string(i) + " out of range for axis extent " +
                            std::to_string(c));
        }
    }
    Shape out_shape(x.shape().begin(), x.shape().end() - 1);
    std::vector<double> out(rows);
    const auto& xv = x.data();
    for (std::size_t r = 0; r < rows; ++r) out[r] = xv[r * c + indices[r]];
    Tensor result = Tensor::from(std::move(out_shape), std::move(out));
    if (detail::tracking({&x})) {
        Tensor tx = x, to = result;
        detail::mark_tracked(result, [tx, to, indices, c, rows]() mutable {
            if (!tx.requires_grad()) return;
            const auto& g = to.grad();
            auto& gx = tx.mutable_grad();
            for (std::size_t r = 0; r < rows; ++r) gx[r * c + indices[r]] += g[r];
        });
    }
    return result;
}

}  // namespace ynet
