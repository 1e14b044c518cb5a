#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cmfuse/tensor.hpp"

namespace cmfuse {

namespace detail {

inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    const size_t r = std::max(a.size(), b.size());
    Shape out(r, 1);
    for (size_t d = 0; d < r; ++d) {
        const int64_t ea = d < r - a.size() ? 1 : a[d - (r - a.size())];
        const int64_t eb = d < r - b.size() ? 1 : b[d - (r - b.size())];
        if (ea == eb) {
            out[d] = ea;
        } else if (ea == 1) {
            out[d] = eb;
        } else if (eb == 1) {
            out[d] = ea;
        } else {
            throw std::invalid_argument(std::string(op) + ": shapes " + shape_str(a) +
                                        " and " + shape_str(b) + " do not broadcast");
        }
    }
    return out;
}

// Strides of `shape` against the broadcast result `out`; 0 where an axis expands.
inline std::vector<int64_t> broadcast_strides(const Shape& shape, const Shape& out) {
    const size_t r = out.size();
    const size_t ra = shape.size();
    const auto own = row_major_strides(shape);
    std::vector<int64_t> s(r, 0);
    for (size_t i = 0; i < ra; ++i) {
        const size_t d = r - ra + i;
        s[d] = (shape[i] == 1 && out[d] != 1) ? 0 : own[i];
    }
    return s;
}

// Odometer walk over out_shape with running offsets for two operands.
template <typename F>
void for_each_broadcast2(const Shape& out_shape, const std::vector<int64_t>& stride_a,
                         const std::vector<int64_t>& stride_b, F&& f) {
    const int64_t total = numel_of(out_shape);
    const int64_t r = static_cast<int64_t>(out_shape.size());
    if (r == 0) {
        if (total > 0) f(int64_t(0), int64_t(0), int64_t(0));
        return;
    }
    std::vector<int64_t> idx(r, 0);
    int64_t oa = 0;
    int64_t ob = 0;
    for (int64_t flat = 0; flat < total; ++flat) {
        f(flat, oa, ob);
        for (int64_t d = r - 1; d >= 0; --d) {
            ++idx[d];
            oa += stride_a[d];
            ob += stride_b[d];
            if (idx[d] < out_shape[d]) break;
            oa -= stride_a[d] * out_shape[d];
            ob -= stride_b[d] * out_shape[d];
            idx[d] = 0;
        }
    }
}

template <typename S, typename FV, typename FGA, typename FGB>
Tensor<S> binary_broadcast(const Tensor<S>& a, const Tensor<S>& b, const char* name, FV val,
                           FGA grad_a, FGB grad_b) {
    const Shape out_shape = broadcast_shape(a.shape(), b.shape(), name);
    Tensor<S> out(out_shape, any_requires_grad<S>({a, b}));
    const auto sa = broadcast_strides(a.shape(), out_shape);
    const auto sb = broadcast_strides(b.shape(), out_shape);
    {
        const auto& da = a.data();
        const auto& db = b.data();
        auto& dout = out.data();
        for_each_broadcast2(out_shape, sa, sb, [&](int64_t o, int64_t ia, int64_t ib) {
            dout[o] = val(da[ia], db[ib]);
        });
    }
    attach_node(out, {a, b}, [a, b, out_shape, sa, sb, grad_a, grad_b](const Tensor<S>& o) {
        const auto& g = o.grad();
        const auto& da = a.data();
        const auto& db = b.data();
        const bool na = a.requires_grad();
        const bool nb = b.requires_grad();
        std::vector<S>* ga = na ? &a.grad() : nullptr;
        std::vector<S>* gb = nb ? &b.grad() : nullptr;
        for_each_broadcast2(out_shape, sa, sb, [&](int64_t o2, int64_t ia, int64_t ib) {
            if (na) (*ga)[ia] += grad_a(g[o2], da[ia], db[ib]);
            if (nb) (*gb)[ib] += grad_b(g[o2], da[ia], db[ib]);
        });
    });
    return out;
}

template <typename S, typename FV, typename FG>
Tensor<S> unary_op(const Tensor<S>& x, FV val, FG grad) {
    Tensor<S> out(x.shape(), any_requires_grad<S>({x}));
    const auto& dx = x.data();
    auto& dout = out.data();
    for (size_t i = 0; i < dx.size(); ++i) dout[i] = val(dx[i]);
    attach_node(out, {x}, [x, grad](const Tensor<S>& o) {
        if (!x.requires_grad()) return;
        const auto& g = o.grad();
        const auto& dy = o.data();
        const auto& dxi = x.data();
        auto& gx = x.grad();
        for (size_t i = 0; i < gx.size(); ++i) gx[i] += grad(g[i], dxi[i], dy[i]);
    });
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic (trailing-axis broadcasting with size-1 expansion)
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    return detail::binary_broadcast(
        a, b, "add", [](S x, S y) { return x + y; }, [](S g, S, S) { return g; },
        [](S g, S, S) { return g; });
}

// Broadcast addition of a lower-rank operand onto a map; alias kept for the
// call sites that fuse a per-sample vector over spatial positions.
template <typename S>
Tensor<S> broadcast_add(const Tensor<S>& a, const Tensor<S>& b) {
    return add(a, b);
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
    return detail::binary_broadcast(
        a, b, "sub", [](S x, S y) { return x - y; }, [](S g, S, S) { return g; },
        [](S g, S, S) { return -g; });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    return detail::binary_broadcast(
        a, b, "mul", [](S x, S y) { return x * y; }, [](S g, S, S y) { return g * y; },
        [](S g, S x, S) { return g * x; });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& x, S c) {
    return detail::unary_op(
        x, [c](S v) { return c * v; }, [c](S g, S, S) { return c * g; });
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
    // relu'(0) = 0
    return detail::unary_op(
        x, [](S v) { return v > S(0) ? v : S(0); },
        [](S g, S v, S) { return v > S(0) ? g : S(0); });
}

template <typename S>
Tensor<S> tanh(const Tensor<S>& x) {
    return detail::unary_op(
        x, [](S v) { return std::tanh(v); }, [](S g, S, S y) { return g * (S(1) - y * y); });
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
    return detail::unary_op(
        x,
        [](S v) {
            return v >= S(0) ? S(1) / (S(1) + std::exp(-v))
                             : std::exp(v) / (S(1) + std::exp(v));
        },
        [](S g, S, S y) { return g * y * (S(1) - y); });
}

// ---------------------------------------------------------------------------
// Matrix multiplication (batched, leading axes broadcast)
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.rank() < 2 || b.rank() < 2) {
        throw std::invalid_argument("matmul: operands must have rank >= 2, got " +
                                    shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    const int64_t m = a.shape()[a.rank() - 2];
    const int64_t n = a.shape()[a.rank() - 1];
    const int64_t n2 = b.shape()[b.rank() - 2];
    const int64_t p = b.shape()[b.rank() - 1];
    if (n != n2) {
        throw std::invalid_argument("matmul: inner extents of " + shape_str(a.shape()) +
                                    " and " + shape_str(b.shape()) + " do not conform");
    }
    const Shape batch_a(a.shape().begin(), a.shape().end() - 2);
    const Shape batch_b(b.shape().begin(), b.shape().end() - 2);
    const Shape batch = detail::broadcast_shape(batch_a, batch_b, "matmul");
    Shape out_shape = batch;
    out_shape.push_back(m);
    out_shape.push_back(p);

    Tensor<S> out(out_shape, any_requires_grad<S>({a, b}));
    const auto sa = detail::broadcast_strides(batch_a, batch);
    const auto sb = detail::broadcast_strides(batch_b, batch);

    {
        const S* da = a.data().data();
        const S* db = b.data().data();
        S* dout = out.data().data();
        int64_t mat = 0;
        detail::for_each_broadcast2(batch, sa, sb, [&](int64_t, int64_t ia, int64_t ib) {
            const S* amat = da + ia * m * n;
            const S* bmat = db + ib * n * p;
            S* omat = dout + mat * m * p;
            for (int64_t i = 0; i < m; ++i) {
                S* orow = omat + i * p;
                const S* arow = amat + i * n;
                for (int64_t k = 0; k < n; ++k) {
                    const S av = arow[k];
                    const S* brow = bmat + k * p;
                    for (int64_t j = 0; j < p; ++j) orow[j] += av * brow[j];
                }
            }
            ++mat;
        });
    }

    attach_node(out, {a, b}, [a, b, batch, sa, sb, m, n, p](const Tensor<S>& o) {
        const S* g = o.grad().data();
        const S* da = a.data().data();
        const S* db = b.data().data();
        const bool na = a.requires_grad();
        const bool nb = b.requires_grad();
        S* ga = na ? a.grad().data() : nullptr;
        S* gb = nb ? b.grad().data() : nullptr;
        int64_t mat = 0;
        detail::for_each_broadcast2(batch, sa, sb, [&](int64_t, int64_t ia, int64_t ib) {
            const S* gmat = g + mat * m * p;
            const S* amat = da + ia * m * n;
            const S* bmat = db + ib * n * p;
            if (na) {
                S* gamat = ga + ia * m * n;
                for (int64_t i = 0; i < m; ++i) {
                    for (int64_t k = 0; k < n; ++k) {
                        S acc = S(0);
                        const S* grow = gmat + i * p;
                        const S* brow = bmat + k * p;
                        for (int64_t j = 0; j < p; ++j) acc += grow[j] * brow[j];
                        gamat[i * n + k] += acc;
                    }
                }
            }
            if (nb) {
                S* gbmat = gb + ib * n * p;
                for (int64_t k = 0; k < n; ++k) {
                    for (int64_t j = 0; j < p; ++j) {
                        S acc = S(0);
                        for (int64_t i = 0; i < m; ++i) acc += amat[i * n + k] * gmat[i * p + j];
                        gbmat[k * p + j] += acc;
                    }
                }
            }
            ++mat;
        });
    });
    return out;
}

// ---------------------------------------------------------------------------
// Softmax family (max-subtracted)
// ---------------------------------------------------------------------------

namespace detail {
inline void check_axis(int64_t axis, int64_t rank, const char* op, const Shape& shape) {
    if (axis < 0 || axis >= rank) {
        throw std::invalid_argument(std::string(op) + ": axis " + std::to_string(axis) +
                                    " invalid for shape " + shape_str(shape));
    }
}

struct AxisSplit {
    int64_t outer, n, inner;
};

inline AxisSplit axis_split(const Shape& shape, int64_t axis) {
    AxisSplit s{1, shape[axis], 1};
    for (int64_t d = 0; d < axis; ++d) s.outer *= shape[d];
    for (int64_t d = axis + 1; d < static_cast<int64_t>(shape.size()); ++d) s.inner *= shape[d];
    return s;
}
}  // namespace detail

template <typename S>
Tensor<S> softmax(const Tensor<S>& x, int64_t axis) {
    detail::check_axis(axis, x.rank(), "softmax", x.shape());
    const auto sp = detail::axis_split(x.shape(), axis);
    Tensor<S> out(x.shape(), any_requires_grad<S>({x}));
    const auto& dx = x.data();
    auto& dy = out.data();
    for (int64_t o = 0; o < sp.outer; ++o) {
        for (int64_t in = 0; in < sp.inner; ++in) {
            const int64_t base = o * sp.n * sp.inner + in;
            S mx = dx[base];
            for (int64_t i = 1; i < sp.n; ++i) mx = std::max(mx, dx[base + i * sp.inner]);
            S sum = S(0);
            for (int64_t i = 0; i < sp.n; ++i) {
                const S e = std::exp(dx[base + i * sp.inner] - mx);
                dy[base + i * sp.inner] = e;
                sum += e;
            }
            for (int64_t i = 0; i < sp.n; ++i) dy[base + i * sp.inner] /= sum;
        }
    }
    attach_node(out, {x}, [x, sp](const Tensor<S>& o) {
        if (!x.requires_grad()) return;
        const auto& g = o.grad();
        const auto& y = o.data();
        auto& gx = x.grad();
        for (int64_t ot = 0; ot < sp.outer; ++ot) {
            for (int64_t in = 0; in < sp.inner; ++in) {
                const int64_t base = ot * sp.n * sp.inner + in;
                S dot = S(0);
                for (int64_t i = 0; i < sp.n; ++i) {
                    const int64_t k = base + i * sp.inner;
                    dot += g[k] * y[k];
                }
                for (int64_t i = 0; i < sp.n; ++i) {
                    const int64_t k = base + i * sp.inner;
                    gx[k] += y[k] * (g[k] - dot);
                }
            }
        }
    });
    return out;
}

template <typename S>
Tensor<S> log_softmax(const Tensor<S>& x, int64_t axis) {
    detail::check_axis(axis, x.rank(), "log_softmax", x.shape());
    const auto sp = detail::axis_split(x.shape(), axis);
    Tensor<S> out(x.shape(), any_requires_grad<S>({x}));
    const auto& dx = x.data();
    auto& dy = out.data();
    for (int64_t o = 0; o < sp.outer; ++o) {
        for (int64_t in = 0; in < sp.inner; ++in) {
            const int64_t base = o * sp.n * sp.inner + in;
            S mx = dx[base];
            for (int64_t i = 1; i < sp.n; ++i) mx = std::max(mx, dx[base + i * sp.inner]);
            S sum = S(0);
            for (int64_t i = 0; i < sp.n; ++i) sum += std::exp(dx[base + i * sp.inner] - mx);
            const S lse = mx + std::log(sum);
            for (int64_t i = 0; i < sp.n; ++i) {
                const int64_t k = base + i * sp.inner;
                dy[k] = dx[k] - lse;
            }
        }
    }
    attach_node(out, {x}, [x, sp](const Tensor<S>& o) {
        if (!x.requires_grad()) return;
        const auto& g = o.grad();
        const auto& y = o.data();
        auto& gx = x.grad();
        for (int64_t ot = 0; ot < sp.outer; ++ot) {
            for (int64_t in = 0; in < sp.inner; ++in) {
                const int64_t base = ot * sp.n * sp.inner + in;
                S gsum = S(0);
                for (int64_t i = 0; i < sp.n; ++i) gsum += g[base + i * sp.inner];
                for (int64_t i = 0; i < sp.n; ++i) {
                    const int64_t k = base + i * sp.inner;
                    gx[k] += g[k] - std::exp(y[k]) * gsum;
                }
            }
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Convolutions (cross-correlation convention, no kernel flip)
// ---------------------------------------------------------------------------

inline int64_t conv_out_extent(int64_t in, int64_t k, int64_t stride, int64_t pad) {
    return (in + 2 * pad - k) / stride + 1;
}

template <typename S>
Tensor<S> conv1d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b, int64_t stride,
                 int64_t padding) {
    if (x.rank() != 3 || w.rank() != 3 || b.rank() != 1) {
        throw std::invalid_argument("conv1d: expected x (batch, ch, len) " + shape_str(x.shape()) +
                                    ", w (out, in, k) " + shape_str(w.shape()) + ", b (out) " +
                                    shape_str(b.shape()));
    }
    const int64_t B = x.extent(0), Cin = x.extent(1), L = x.extent(2);
    const int64_t Cout = w.extent(0), K = w.extent(2);
    if (w.extent(1) != Cin) {
        throw std::invalid_argument("conv1d: kernel expects " + std::to_string(w.extent(1)) +
                                    " input channels, input has " + std::to_string(Cin));
    }
    if (b.extent(0) != Cout) {
        throw std::invalid_argument("conv1d: bias extent " + std::to_string(b.extent(0)) +
                                    " != output channels " + std::to_string(Cout));
    }
    if (stride < 1 || padding < 0) {
        throw std::invalid_argument("conv1d: stride must be >= 1 and padding >= 0");
    }
    if (K > L + 2 * padding) {
        throw std::invalid_argument("conv1d: kernel " + std::to_string(K) +
                                    " larger than padded input " + std::to_string(L + 2 * padding));
    }
    const int64_t Lo = conv_out_extent(L, K, stride, padding);
    Tensor<S> out(Shape{B, Cout, Lo}, any_requires_grad<S>({x, w, b}));

    const S* dx = x.data().data();
    const S* dw = w.data().data();
    const S* db = b.data().data();
    S* dy = out.data().data();
    for (int64_t bi = 0; bi < B; ++bi) {
        for (int64_t co = 0; co < Cout; ++co) {
            for (int64_t lo = 0; lo < Lo; ++lo) {
                S acc = db[co];
                for (int64_t ci = 0; ci < Cin; ++ci) {
                    const S* xrow = dx + (bi * Cin + ci) * L;
                    const S* wrow = dw + (co * Cin + ci) * K;
                    for (int64_t k = 0; k < K; ++k) {
                        const int64_t li = lo * stride + k - padding;
                        if (li >= 0 && li < L) acc += xrow[li] * wrow[k];
                    }
                }
                dy[(bi * Cout + co) * Lo + lo] = acc;
            }
        }
    }

    attach_node(out, {x, w, b}, [x, w, b, B, Cin, L, Cout, K, Lo, stride,
                                 padding](const Tensor<S>& o) {
        const S* g = o.grad().data();
        const S* dxi = x.data().data();
        const S* dwi = w.data().data();
        S* gx = x.requires_grad() ? x.grad().data() : nullptr;
        S* gw = w.requires_grad() ? w.grad().data() : nullptr;
        S* gb = b.requires_grad() ? b.grad().data() : nullptr;
        for (int64_t bi = 0; bi < B; ++bi) {
            for (int64_t co = 0; co < Cout; ++co) {
                for (int64_t lo = 0; lo < Lo; ++lo) {
                    const S go = g[(bi * Cout + co) * Lo + lo];
                    if (gb) gb[co] += go;
                    for (int64_t ci = 0; ci < Cin; ++ci) {
                        for (int64_t k = 0; k < K; ++k) {
                            const int64_t li = lo * stride + k - padding;
                            if (li < 0 || li >= L) continue;
                            if (gx) gx[(bi * Cin + ci) * L + li] += go * dwi[(co * Cin + ci) * K + k];
                            if (gw) gw[(co * Cin + ci) * K + k] += go * dxi[(bi * Cin + ci) * L + li];
                        }
                    }
                }
            }
        }
    });
    return out;
}

template <typename S>
Tensor<S> conv3d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b, int64_t stride,
                 int64_t padding, int64_t groups = 1) {
    if (x.rank() != 5 || w.rank() != 5 || b.rank() != 1) {
        throw std::invalid_argument("conv3d: expected x (batch, ch, d, h, w) " +
                                    shape_str(x.shape()) + ", w (out, in/g, kd, kh, kw) " +
                                    shape_str(w.shape()));
    }
    const int64_t B = x.extent(0), Cin = x.extent(1);
    const int64_t D = x.extent(2), H = x.extent(3), W = x.extent(4);
    const int64_t Cout = w.extent(0);
    const int64_t Kd = w.extent(2), Kh = w.extent(3), Kw = w.extent(4);
    if (groups < 1 || Cin % groups != 0 || Cout % groups != 0) {
        throw std::invalid_argument("conv3d: groups " + std::to_string(groups) +
                                    " must divide channels " + std::to_string(Cin) + "/" +
                                    std::to_string(Cout));
    }
    const int64_t Cig = Cin / groups;
    const int64_t Cog = Cout / groups;
    if (w.extent(1) != Cig) {
        throw std::invalid_argument("conv3d: kernel expects " + std::to_string(w.extent(1)) +
                                    " channels per group, input provides " + std::to_string(Cig));
    }
    if (b.extent(0) != Cout) {
        throw std::invalid_argument("conv3d: bias extent mismatch");
    }
    if (stride < 1 || padding < 0) {
        throw std::invalid_argument("conv3d: stride must be >= 1 and padding >= 0");
    }
    if (Kd > D + 2 * padding || Kh > H + 2 * padding || Kw > W + 2 * padding) {
        throw std::invalid_argument("conv3d: kernel " + shape_str({Kd, Kh, Kw}) +
                                    " larger than padded input " +
                                    shape_str({D + 2 * padding, H + 2 * padding, W + 2 * padding}));
    }
    const int64_t Do = conv_out_extent(D, Kd, stride, padding);
    const int64_t Ho = conv_out_extent(H, Kh, stride, padding);
    const int64_t Wo = conv_out_extent(W, Kw, stride, padding);
    Tensor<S> out(Shape{B, Cout, Do, Ho, Wo}, any_requires_grad<S>({x, w, b}));

    const S* dx = x.data().data();
    const S* dw = w.data().data();
    const S* db = b.data().data();
    S* dy = out.data().data();
    const int64_t xs_c = D * H * W, xs_d = H * W;
    const int64_t ws_c = Kd * Kh * Kw, ws_d = Kh * Kw;
    for (int64_t bi = 0; bi < B; ++bi) {
        for (int64_t gr = 0; gr < groups; ++gr) {
            for (int64_t cg = 0; cg < Cog; ++cg) {
                const int64_t co = gr * Cog + cg;
                S* yplane = dy + ((bi * Cout + co) * Do) * Ho * Wo;
                for (int64_t od = 0; od < Do; ++od) {
                    for (int64_t oh = 0; oh < Ho; ++oh) {
                        for (int64_t ow = 0; ow < Wo; ++ow) {
                            S acc = db[co];
                            for (int64_t ci = 0; ci < Cig; ++ci) {
                                const S* xch = dx + (bi * Cin + gr * Cig + ci) * xs_c;
                                const S* wch = dw + (co * Cig + ci) * ws_c;
                                for (int64_t kd = 0; kd < Kd; ++kd) {
                                    const int64_t id = od * stride + kd - padding;
                                    if (id < 0 || id >= D) continue;
                                    for (int64_t kh = 0; kh < Kh; ++kh) {
                                        const int64_t ih = oh * stride + kh - padding;
                                        if (ih < 0 || ih >= H) continue;
                                        for (int64_t kw = 0; kw < Kw; ++kw) {
                                            const int64_t iw = ow * stride + kw - padding;
                                            if (iw < 0 || iw >= W) continue;
                                            acc += xch[id * xs_d + ih * W + iw] *
                                                   wch[kd * ws_d + kh * Kw + kw];
                                        }
                                    }
                                }
                            }
                            yplane[(od * Ho + oh) * Wo + ow] = acc;
                        }
                    }
                }
            }
        }
    }

    attach_node(out, {x, w, b}, [x, w, b, B, Cin, D, H, W, Cout, Kd, Kh, Kw, Do, Ho, Wo, stride,
                                 padding, groups, Cig, Cog, xs_c, xs_d, ws_c,
                                 ws_d](const Tensor<S>& o) {
        const S* g = o.grad().data();
        const S* dxi = x.data().data();
        const S* dwi = w.data().data();
        S* gx = x.requires_grad() ? x.grad().data() : nullptr;
        S* gw = w.requires_grad() ? w.grad().data() : nullptr;
        S* gb = b.requires_grad() ? b.grad().data() : nullptr;
        for (int64_t bi = 0; bi < B; ++bi) {
            for (int64_t gr = 0; gr < groups; ++gr) {
                for (int64_t cg = 0; cg < Cog; ++cg) {
                    const int64_t co = gr * Cog + cg;
                    const S* gplane = g + ((bi * Cout + co) * Do) * Ho * Wo;
                    for (int64_t od = 0; od < Do; ++od) {
                        for (int64_t oh = 0; oh < Ho; ++oh) {
                            for (int64_t ow = 0; ow < Wo; ++ow) {
                                const S go = gplane[(od * Ho + oh) * Wo + ow];
                                if (gb) gb[co] += go;
                                for (int64_t ci = 0; ci < Cig; ++ci) {
                                    const int64_t xch = (bi * Cin + gr * Cig + ci) * xs_c;
                                    const int64_t wch = (co * Cig + ci) * ws_c;
                                    for (int64_t kd = 0; kd < Kd; ++kd) {
                                        const int64_t id = od * stride + kd - padding;
                                        if (id < 0 || id >= D) continue;
                                        for (int64_t kh = 0; kh < Kh; ++kh) {
                                            const int64_t ih = oh * stride + kh - padding;
                                            if (ih < 0 || ih >= H) continue;
                                            for (int64_t kw = 0; kw < Kw; ++kw) {
                                                const int64_t iw = ow * stride + kw - padding;
                                                if (iw < 0 || iw >= W) continue;
                                                const int64_t xi = xch + id * xs_d + ih * W + iw;
                                                const int64_t wi = wch + kd * ws_d + kh * Kw + kw;
                                                if (gx) gx[xi] += go * dwi[wi];
                                                if (gw) gw[wi] += go * dxi[xi];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Structural ops
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> maxpool1d(const Tensor<S>& x, int64_t k, int64_t stride) {
    if (x.rank() != 3) {
        throw std::invalid_argument("maxpool1d: expected (batch, ch, len), got " +
                                    shape_str(x.shape()));
    }
    const int64_t B = x.extent(0), C = x.extent(1), L = x.extent(2);
    if (k < 1 || stride < 1 || k > L) {
        throw std::invalid_argument("maxpool1d: window " + std::to_string(k) +
                                    " invalid for length " + std::to_string(L));
    }
    const int64_t Lo = (L - k) / stride + 1;
    Tensor<S> out(Shape{B, C, Lo}, any_requires_grad<S>({x}));
    auto argmax = std::make_shared<std::vector<int64_t>>(B * C * Lo);
    const auto& dx = x.data();
    auto& dy = out.data();
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const S* row = dx.data() + bc * L;
        for (int64_t lo = 0; lo < Lo; ++lo) {
            int64_t best = lo * stride;
            S bv = row[best];
            for (int64_t i = 1; i < k; ++i) {
                const int64_t li = lo * stride + i;
                if (row[li] > bv) {  // ties keep the first position
                    bv = row[li];
                    best = li;
                }
            }
            dy[bc * Lo + lo] = bv;
            (*argmax)[bc * Lo + lo] = best;
        }
    }
    attach_node(out, {x}, [x, argmax, L, Lo](const Tensor<S>& o) {
        if (!x.requires_grad()) return;
        const auto& g = o.grad();
        auto& gx = x.grad();
        const int64_t rows = static_cast<int64_t>(argmax->size()) / Lo;
        for (int64_t bc = 0; bc < rows; ++bc) {
            for (int64_t lo = 0; lo < Lo; ++lo) {
                gx[bc * L + (*argmax)[bc * Lo + lo]] += g[bc * Lo + lo];
            }
        }
    });
    return out;
}

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape new_shape) {
    if (numel_of(new_shape) != x.numel()) {
        throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " +
                                    shape_str(new_shape));
    }
    Tensor<S> out(std::move(new_shape), x.data(), any_requires_grad<S>({x}));
    attach_node(out, {x}, [x](const Tensor<S>& o) {
        if (!x.requires_grad()) return;
        const auto& g = o.grad();
        auto& gx = x.grad();
        for (size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
    });
    return out;
}

template <typename S>
Tensor<S> flatten(const Tensor<S>& x, int64_t from_axis) {
    if (from_axis < 0 || from_axis > x.rank()) {
        throw std::invalid_argument("flatten: axis " + std::to_string(from_axis) +
                                    " invalid for shape " + shape_str(x.shape()));
    }
    Shape out_shape(x.shape().begin(), x.shape().begin() + from_axis);
    int64_t rest = 1;
    for (int64_t d = from_axis; d < x.rank(); ++d) rest *= x.extent(d);
    out_shape.push_back(rest);
    return reshape(x, std::move(out_shape));
}

template <typename S>
Tensor<S> permute(const Tensor<S>& x, const std::vector<int64_t>& axes) {
    const int64_t r = x.rank();
    if (static_cast<int64_t>(axes.size()) != r) {
        throw std::invalid_argument("permute: got " + std::to_string(axes.size()) +
                                    " axes for rank " + std::to_string(r));
    }
    std::vector<bool> seen(r, false);
    for (int64_t a : axes) {
        if (a < 0 || a >= r || seen[a]) {
            throw std::invalid_argument("permute: axes are not a permutation of 0.." +
                                        std::to_string(r - 1));
        }
        seen[a] = true;
    }
    Shape out_shape(r);
    for (int64_t d = 0; d < r; ++d) out_shape[d] = x.extent(axes[d]);
    Tensor<S> out(out_shape, any_requires_grad<S>({x}));

    const auto in_strides = row_major_strides(x.shape());
    std::vector<int64_t> gather(r);
    for (int64_t d = 0; d < r; ++d) gather[d] = in_strides[axes[d]];
    const std::vector<int64_t> zero(r, 0);
    const auto& dx = x.data();
    auto& dy = out.data();
    detail::for_each_broadcast2(out_shape, gather, zero,
                                [&](int64_t o, int64_t i, int64_t) { dy[o] = dx[i]; });

    attach_node(out, {x, }, [x, out_shape, gather, zero](const Tensor<S>& o) {
        if (!x.requires_grad()) return;
        const auto& g = o.grad();
        auto& gx = x.grad();
        detail::for_each_broadcast2(out_shape, gather, zero,
                                    [&](int64_t ot, int64_t i, int64_t) { gx[i] += g[ot]; });
    });
    return out;
}

template <typename S>
Tensor<S> concat(const std::vector<Tensor<S>>& xs, int64_t axis) {
    if (xs.empty()) throw std::invalid_argument("concat: no operands");
    const int64_t r = xs[0].rank();
    detail::check_axis(axis, r, "concat", xs[0].shape());
    int64_t axis_total = 0;
    for (const auto& t : xs) {
        if (t.rank() != r) {
            throw std::invalid_argument("concat: rank mismatch between " +
                                        shape_str(xs[0].shape()) + " and " + shape_str(t.shape()));
        }
        for (int64_t d = 0; d < r; ++d) {
            if (d != axis && t.extent(d) != xs[0].extent(d)) {
                throw std::invalid_argument("concat: shapes " + shape_str(xs[0].shape()) +
                                            " and " + shape_str(t.shape()) +
                                            " differ off the concat axis");
            }
        }
        axis_total += t.extent(axis);
    }
    Shape out_shape = xs[0].shape();
    out_shape[axis] = axis_total;

    bool needs = false;
    if (GradMode::enabled()) {
        for (const auto& t : xs) needs = needs || t.requires_grad();
    }
    Tensor<S> out(out_shape, needs);

    int64_t outer = 1, inner = 1;
    for (int64_t d = 0; d < axis; ++d) outer *= out_shape[d];
    for (int64_t d = axis + 1; d < r; ++d) inner *= out_shape[d];

    auto& dy = out.data();
    int64_t offset = 0;
    for (const auto& t : xs) {
        const int64_t slab = t.extent(axis) * inner;
        const auto& dt = t.data();
        for (int64_t o = 0; o < outer; ++o) {
            std::copy(dt.begin() + o * slab, dt.begin() + (o + 1) * slab,
                      dy.begin() + o * axis_total * inner + offset);
        }
        offset += slab;
    }

    attach_node(out, std::vector<Tensor<S>>(xs), [xs, outer, inner, axis_total,
                                                  axis](const Tensor<S>& o) {
        const auto& g = o.grad();
        int64_t off = 0;
        for (const auto& t : xs) {
            const int64_t slab = t.extent(axis) * inner;
            if (t.requires_grad()) {
                auto& gt = t.grad();
                for (int64_t ou = 0; ou < outer; ++ou) {
                    const int64_t src = ou * axis_total * inner + off;
                    for (int64_t i = 0; i < slab; ++i) gt[ou * slab + i] += g[src + i];
                }
            }
            off += slab;
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> sum_all(const Tensor<S>& x) {
    Tensor<S> out(Shape{}, any_requires_grad<S>({x}));
    S acc = S(0);
    for (S v : x.data()) acc += v;
    out.data()[0] = acc;
    attach_node(out, {x}, [x](const Tensor<S>& o) {
        if (!x.requires_grad()) return;
        const S g = o.grad()[0];
        auto& gx = x.grad();
        for (auto& v : gx) v += g;
    });
    return out;
}

template <typename S>
Tensor<S> mean_all(const Tensor<S>& x) {
    return scale(sum_all(x), S(1) / static_cast<S>(x.numel()));
}

template <typename S>
Tensor<S> sum_axis(const Tensor<S>& x, int64_t axis, bool keepdim = false) {
    detail::check_axis(axis, x.rank(), "sum_axis", x.shape());
    const auto sp = detail::axis_split(x.shape(), axis);
    Shape out_shape;
    for (int64_t d = 0; d < x.rank(); ++d) {
        if (d == axis) {
            if (keepdim) out_shape.push_back(1);
        } else {
            out_shape.push_back(x.extent(d));
        }
    }
    Tensor<S> out(out_shape, any_requires_grad<S>({x}));
    const auto& dx = x.data();
    auto& dy = out.data();
    for (int64_t o = 0; o < sp.outer; ++o) {
        for (int64_t in = 0; in < sp.inner; ++in) {
            S acc = S(0);
            for (int64_t i = 0; i < sp.n; ++i) acc += dx[(o * sp.n + i) * sp.inner + in];
            dy[o * sp.inner + in] = acc;
        }
    }
    attach_node(out, {x}, [x, sp](const Tensor<S>& o) {
        if (!x.requires_grad()) return;
        const auto& g = o.grad();
        auto& gx = x.grad();
        for (int64_t ot = 0; ot < sp.outer; ++ot) {
            for (int64_t in = 0; in < sp.inner; ++in) {
                const S gv = g[ot * sp.inner + in];
                for (int64_t i = 0; i < sp.n; ++i) gx[(ot * sp.n + i) * sp.inner + in] += gv;
            }
        }
    });
    return out;
}

template <typename S>
Tensor<S> mean_axis(const Tensor<S>& x, int64_t axis, bool keepdim = false) {
    return scale(sum_axis(x, axis, keepdim), S(1) / static_cast<S>(x.extent(axis)));
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

// Normalizes the last axis with population statistics, then applies the affine
// pair. Epsilon keeps constant rows finite.
template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                     S eps = S(1e-5)) {
    if (x.rank() < 1) throw std::invalid_argument("layer_norm: rank >= 1 required");
    const int64_t n = x.extent(x.rank() - 1);
    if (gamma.numel() != n || beta.numel() != n) {
        throw std::invalid_argument("layer_norm: affine extents " + shape_str(gamma.shape()) +
                                    "/" + shape_str(beta.shape()) + " do not match last axis " +
                                    std::to_string(n));
    }
    const int64_t rows = x.numel() / n;
    Tensor<S> out(x.shape(), any_requires_grad<S>({x, gamma, beta}));
    auto xhat = std::make_shared<std::vector<S>>(x.numel());
    auto inv_std = std::make_shared<std::vector<S>>(rows);

    const auto& dx = x.data();
    const auto& dg = gamma.data();
    const auto& db = beta.data();
    auto& dy = out.data();
    for (int64_t r = 0; r < rows; ++r) {
        const S* row = dx.data() + r * n;
        S mean = S(0);
        for (int64_t i = 0; i < n; ++i) mean += row[i];
        mean /= static_cast<S>(n);
        S var = S(0);
        for (int64_t i = 0; i < n; ++i) {
            const S d = row[i] - mean;
            var += d * d;
        }
        var /= static_cast<S>(n);
        const S istd = S(1) / std::sqrt(var + eps);
        (*inv_std)[r] = istd;
        for (int64_t i = 0; i < n; ++i) {
            const S h = (row[i] - mean) * istd;
            (*xhat)[r * n + i] = h;
            dy[r * n + i] = dg[i] * h + db[i];
        }
    }

    attach_node(out, {x, gamma, beta}, [x, gamma, beta, xhat, inv_std, rows,
                                        n](const Tensor<S>& o) {
        const auto& g = o.grad();
        const auto& dgm = gamma.data();
        S* gx = x.requires_grad() ? x.grad().data() : nullptr;
        S* gg = gamma.requires_grad() ? gamma.grad().data() : nullptr;
        S* gb = beta.requires_grad() ? beta.grad().data() : nullptr;
        std::vector<S> a(n);
        for (int64_t r = 0; r < rows; ++r) {
            const S* grow = g.data() + r * n;
            const S* hrow = xhat->data() + r * n;
            if (gg || gb) {
                for (int64_t i = 0; i < n; ++i) {
                    if (gg) gg[i] += grow[i] * hrow[i];
                    if (gb) gb[i] += grow[i];
                }
            }
            if (gx) {
                S mean_a = S(0), mean_ah = S(0);
                for (int64_t i = 0; i < n; ++i) {
                    a[i] = grow[i] * dgm[i];
                    mean_a += a[i];
                    mean_ah += a[i] * hrow[i];
                }
                mean_a /= static_cast<S>(n);
                mean_ah /= static_cast<S>(n);
                const S istd = (*inv_std)[r];
                for (int64_t i = 0; i < n; ++i) {
                    gx[r * n + i] += (a[i] - mean_a - hrow[i] * mean_ah) * istd;
                }
            }
        }
    });
    return out;
}

// Channel axis is 1. Train mode normalizes with batch statistics and updates
// the running buffers in place; eval mode normalizes with the running buffers.
template <typename S>
Tensor<S> batch_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                     Tensor<S>& running_mean, Tensor<S>& running_var, S momentum, S eps,
                     bool training) {
    if (x.rank() < 2) throw std::invalid_argument("batch_norm: rank >= 2 required");
    const int64_t B = x.extent(0);
    const int64_t C = x.extent(1);
    const int64_t R = x.numel() / (B * C);
    if (gamma.numel() != C || beta.numel() != C || running_mean.numel() != C ||
        running_var.numel() != C) {
        throw std::invalid_argument("batch_norm: per-channel extents do not match " +
                                    std::to_string(C) + " channels");
    }
    const int64_t M = B * R;
    Tensor<S> out(x.shape(), any_requires_grad<S>({x, gamma, beta}));
    auto xhat = std::make_shared<std::vector<S>>(x.numel());
    auto inv_std = std::make_shared<std::vector<S>>(C);

    const auto& dx = x.data();
    const auto& dg = gamma.data();
    const auto& db = beta.data();
    auto& dy = out.data();

    std::vector<S> mean(C), var(C);
    if (training) {
        for (int64_t c = 0; c < C; ++c) {
            S m = S(0);
            for (int64_t b = 0; b < B; ++b) {
                const S* p = dx.data() + (b * C + c) * R;
                for (int64_t r = 0; r < R; ++r) m += p[r];
            }
            m /= static_cast<S>(M);
            S v = S(0);
            for (int64_t b = 0; b < B; ++b) {
                const S* p = dx.data() + (b * C + c) * R;
                for (int64_t r = 0; r < R; ++r) {
                    const S d = p[r] - m;
                    v += d * d;
                }
            }
            v /= static_cast<S>(M);
            mean[c] = m;
            var[c] = v;
            running_mean.data()[c] = (S(1) - momentum) * running_mean.data()[c] + momentum * m;
            running_var.data()[c] = (S(1) - momentum) * running_var.data()[c] + momentum * v;
        }
    } else {
        for (int64_t c = 0; c < C; ++c) {
            mean[c] = running_mean.data()[c];
            var[c] = running_var.data()[c];
        }
    }

    for (int64_t c = 0; c < C; ++c) {
        const S istd = S(1) / std::sqrt(var[c] + eps);
        (*inv_std)[c] = istd;
        for (int64_t b = 0; b < B; ++b) {
            const S* p = dx.data() + (b * C + c) * R;
            S* h = xhat->data() + (b * C + c) * R;
            S* y = dy.data() + (b * C + c) * R;
            for (int64_t r = 0; r < R; ++r) {
                h[r] = (p[r] - mean[c]) * istd;
                y[r] = dg[c] * h[r] + db[c];
            }
        }
    }

    attach_node(out, {x, gamma, beta}, [x, gamma, beta, xhat, inv_std, B, C, R, M,
                                        training](const Tensor<S>& o) {
        const auto& g = o.grad();
        const auto& dgm = gamma.data();
        S* gx = x.requires_grad() ? x.grad().data() : nullptr;
        S* gg = gamma.requires_grad() ? gamma.grad().data() : nullptr;
        S* gb = beta.requires_grad() ? beta.grad().data() : nullptr;
        for (int64_t c = 0; c < C; ++c) {
            S sum_g = S(0), sum_gh = S(0);
            for (int64_t b = 0; b < B; ++b) {
                const S* grow = g.data() + (b * C + c) * R;
                const S* hrow = xhat->data() + (b * C + c) * R;
                for (int64_t r = 0; r < R; ++r) {
                    sum_g += grow[r];
                    sum_gh += grow[r] * hrow[r];
                }
            }
            if (gg) gg[c] += sum_gh;
            if (gb) gb[c] += sum_g;
            if (gx) {
                const S istd = (*inv_std)[c];
                const S gc = dgm[c];
                if (training) {
                    const S mean_g = sum_g / static_cast<S>(M);
                    const S mean_gh = sum_gh / static_cast<S>(M);
                    for (int64_t b = 0; b < B; ++b) {
                        const S* grow = g.data() + (b * C + c) * R;
                        const S* hrow = xhat->data() + (b * C + c) * R;
                        S* gxr = gx + (b * C + c) * R;
                        for (int64_t r = 0; r < R; ++r) {
                            gxr[r] += gc * istd * (grow[r] - mean_g - hrow[r] * mean_gh);
                        }
                    }
                } else {
                    for (int64_t b = 0; b < B; ++b) {
                        const S* grow = g.data() + (b * C + c) * R;
                        S* gxr = gx + (b * C + c) * R;
                        for (int64_t r = 0; r < R; ++r) gxr[r] += gc * istd * grow[r];
                    }
                }
            }
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Dropout (inverted: survivors scaled at train time, eval is identity)
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> dropout(const Tensor<S>& x, double p, bool training, Rng& rng) {
    if (p < 0.0 || p >= 1.0) {
        throw std::invalid_argument("dropout: probability " + std::to_string(p) +
                                    " outside [0, 1)");
    }
    if (!training || p == 0.0) {
        return detail::unary_op(
            x, [](S v) { return v; }, [](S g, S, S) { return g; });
    }
    auto mask = std::make_shared<std::vector<S>>(x.numel());
    const S keep_scale = static_cast<S>(1.0 / (1.0 - p));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Tensor<S> out(x.shape(), any_requires_grad<S>({x}));
    const auto& dx = x.data();
    auto& dy = out.data();
    for (size_t i = 0; i < dx.size(); ++i) {
        const S m = u(rng) < p ? S(0) : keep_scale;
        (*mask)[i] = m;
        dy[i] = dx[i] * m;
    }
    attach_node(out, {x}, [x, mask](const Tensor<S>& o) {
        if (!x.requires_grad()) return;
        const auto& g = o.grad();
        auto& gx = x.grad();
        for (size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * (*mask)[i];
    });
    return out;
}

// ---------------------------------------------------------------------------
// Stable binary cross-entropy on logits, mean over all cells
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> bce_with_logits(const Tensor<S>& logits, const Tensor<S>& targets) {
    if (logits.shape() != targets.shape()) {
        throw std::invalid_argument("bce_with_logits: logits " + shape_str(logits.shape()) +
                                    " vs targets " + shape_str(targets.shape()));
    }
    for (S v : targets.data()) {
        if (v != S(0) && v != S(1)) {
            throw std::invalid_argument("bce_with_logits: target entries must be 0 or 1");
        }
    }
    const int64_t N = logits.numel();
    Tensor<S> out(Shape{}, any_requires_grad<S>({logits}));
    const auto& z = logits.data();
    const auto& y = targets.data();
    S acc = S(0);
    for (int64_t i = 0; i < N; ++i) {
        acc += std::max(z[i], S(0)) - z[i] * y[i] + std::log1p(std::exp(-std::abs(z[i])));
    }
    out.data()[0] = acc / static_cast<S>(N);
    attach_node(out, {logits}, [logits, targets, N](const Tensor<S>& o) {
        if (!logits.requires_grad()) return;
        const S g = o.grad()[0] / static_cast<S>(N);
        const auto& z = logits.data();
        const auto& y = targets.data();
        auto& gz = logits.grad();
        for (int64_t i = 0; i < N; ++i) {
            const S s = z[i] >= S(0) ? S(1) / (S(1) + std::exp(-z[i]))
                                     : std::exp(z[i]) / (S(1) + std::exp(z[i]));
            gz[i] += g * (s - y[i]);
        }
    });
    return out;
}

}  // namespace cmfuse
