#pragma once

// Numeric primitives on NCHW tensors. Every op is written as plain loops
// with a fixed summation order, so results are reproducible bit-for-bit and
// directly comparable against the naive reference implementations in the
// verification suite.
//
// Conventions:
//   feature maps  [N, C, H, W]
//   conv2d weights [C_out, C_in, KH, KW], conv1d weights [C_out, C_in/g, K]
//   convolution = cross-correlation (no kernel flip)
//   padding is zero padding; avg pooling divides by the full window area

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <type_traits>
#include <vector>

#include "tensor.hpp"

namespace daponet {

// (h, w) pair for strides and paddings.
struct Int2 {
    std::int64_t h = 1;
    std::int64_t w = 1;
};

inline std::int64_t conv_out_extent(std::int64_t in, std::int64_t k, std::int64_t stride,
                                    std::int64_t pad) {
    return (in + 2 * pad - k) / stride + 1;
}

namespace detail {
inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    // b > 0; round toward negative infinity
    return (a >= 0) ? a / b : -((-a + b - 1) / b);
}
inline std::int64_t ceil_div(std::int64_t a, std::int64_t b) {
    return (a >= 0) ? (a + b - 1) / b : -((-a) / b);
}
}  // namespace detail

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, std::type_identity_t<const Tensor<T>*> bias, Int2 stride,
                 Int2 pad) {
    if (x.rank() != 4)
        throw ShapeError("conv2d: input must be [N,C,H,W], got " + shape_str(x.shape()));
    if (w.rank() != 4)
        throw ShapeError("conv2d: weight must be [Co,Ci,KH,KW], got " + shape_str(w.shape()));
    const std::int64_t nb = x.extent(0), ci = x.extent(1), h = x.extent(2), wd = x.extent(3);
    const std::int64_t co = w.extent(0), kh = w.extent(2), kw = w.extent(3);
    if (w.extent(1) != ci)
        throw ShapeError("conv2d: weight expects " + std::to_string(w.extent(1)) +
                         " input channels, input has " + std::to_string(ci));
    if (bias && (bias->rank() != 1 || bias->extent(0) != co))
        throw ShapeError("conv2d: bias must be [C_out]");
    if (stride.h < 1 || stride.w < 1 || pad.h < 0 || pad.w < 0)
        throw ValueError("conv2d: stride must be >= 1 and pad >= 0");
    const std::int64_t ho = conv_out_extent(h, kh, stride.h, pad.h);
    const std::int64_t wo = conv_out_extent(wd, kw, stride.w, pad.w);
    if (ho < 1 || wo < 1)
        throw ShapeError("conv2d: degenerate output extent for input " + shape_str(x.shape()) +
                         " with kernel " + shape_str(w.shape()));

    Tensor<T> y({nb, co, ho, wo});
    // Sweep per (c, ky, kx) with contiguous row updates. For each output
    // element the contributions still arrive in ascending (c, ky, kx) order,
    // i.e. bit-identical to the naive six-loop form.
    for (std::int64_t n = 0; n < nb; ++n) {
        for (std::int64_t o = 0; o < co; ++o) {
            T* yplane = &y.at(n, o, 0, 0);
            const T b = bias ? (*bias)[o] : T(0);
            for (std::int64_t i = 0; i < ho * wo; ++i) yplane[i] = b;
            for (std::int64_t c = 0; c < ci; ++c) {
                const T* xplane = &x.at(n, c, 0, 0);
                for (std::int64_t ky = 0; ky < kh; ++ky) {
                    const std::int64_t oy0 = std::max<std::int64_t>(0, detail::ceil_div(pad.h - ky, stride.h));
                    const std::int64_t oy1 = std::min(ho - 1, detail::floor_div(h - 1 + pad.h - ky, stride.h));
                    for (std::int64_t kx = 0; kx < kw; ++kx) {
                        const T wv = w.at(o, c, ky, kx);
                        const std::int64_t ox0 = std::max<std::int64_t>(0, detail::ceil_div(pad.w - kx, stride.w));
                        const std::int64_t ox1 = std::min(wo - 1, detail::floor_div(wd - 1 + pad.w - kx, stride.w));
                        for (std::int64_t oy = oy0; oy <= oy1; ++oy) {
                            const T* xrow = xplane + (oy * stride.h - pad.h + ky) * wd - pad.w + kx;
                            T* yrow = yplane + oy * wo;
                            for (std::int64_t ox = ox0; ox <= ox1; ++ox)
                                yrow[ox] += wv * xrow[ox * stride.w];
                        }
                    }
                }
            }
        }
    }
    check_finite(y, "conv2d");
    return y;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, std::type_identity_t<const Tensor<T>*> bias,
                 std::int64_t stride, std::int64_t pad) {
    return conv2d(x, w, bias, Int2{stride, stride}, Int2{pad, pad});
}

// 1-D grouped convolution, stride 1 (used on pooled strips).
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& w, std::type_identity_t<const Tensor<T>*> bias,
                 std::int64_t groups, std::int64_t pad) {
    if (x.rank() != 3)
        throw ShapeError("conv1d: input must be [N,C,L], got " + shape_str(x.shape()));
    if (w.rank() != 3)
        throw ShapeError("conv1d: weight must be [Co,Ci/g,K], got " + shape_str(w.shape()));
    const std::int64_t nb = x.extent(0), ci = x.extent(1), len = x.extent(2);
    const std::int64_t co = w.extent(0), cig = w.extent(1), k = w.extent(2);
    if (groups < 1 || ci % groups != 0 || co % groups != 0)
        throw ShapeError("conv1d: groups=" + std::to_string(groups) +
                         " does not divide channel extents " + std::to_string(ci) + "/" +
                         std::to_string(co));
    if (cig != ci / groups)
        throw ShapeError("conv1d: weight has " + std::to_string(cig) +
                         " channels per group, expected " + std::to_string(ci / groups));
    if (bias && (bias->rank() != 1 || bias->extent(0) != co))
        throw ShapeError("conv1d: bias must be [C_out]");
    const std::int64_t lo = conv_out_extent(len, k, 1, pad);
    if (lo < 1) throw ShapeError("conv1d: degenerate output extent");

    Tensor<T> y({nb, co, lo});
    const std::int64_t co_per_g = co / groups;
    for (std::int64_t n = 0; n < nb; ++n)
        for (std::int64_t o = 0; o < co; ++o) {
            const std::int64_t ci_base = (o / co_per_g) * cig;
            for (std::int64_t op = 0; op < lo; ++op) {
                T acc = bias ? (*bias)[o] : T(0);
                for (std::int64_t c = 0; c < cig; ++c)
                    for (std::int64_t kk = 0; kk < k; ++kk) {
                        const std::int64_t ip = op - pad + kk;
                        if (ip < 0 || ip >= len) continue;
                        acc += x.at(n, ci_base + c, ip) * w.at(o, c, kk);
                    }
                y.at(n, o, op) = acc;
            }
        }
    check_finite(y, "conv1d");
    return y;
}

// Max pool; padded positions never win (treated as -infinity).
template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x, std::int64_t k, std::int64_t stride, std::int64_t pad) {
    if (x.rank() != 4) throw ShapeError("maxpool2d: input must be [N,C,H,W]");
    const std::int64_t nb = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
    const std::int64_t ho = conv_out_extent(h, k, stride, pad);
    const std::int64_t wo = conv_out_extent(w, k, stride, pad);
    if (ho < 1 || wo < 1) throw ShapeError("maxpool2d: degenerate output extent");
    Tensor<T> y({nb, c, ho, wo});
    for (std::int64_t n = 0; n < nb; ++n)
        for (std::int64_t ch = 0; ch < c; ++ch)
            for (std::int64_t oy = 0; oy < ho; ++oy)
                for (std::int64_t ox = 0; ox < wo; ++ox) {
                    T best = -std::numeric_limits<T>::infinity();
                    for (std::int64_t ky = 0; ky < k; ++ky) {
                        const std::int64_t iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= h) continue;
                        for (std::int64_t kx = 0; kx < k; ++kx) {
                            const std::int64_t ix = ox * stride - pad + kx;
                            if (ix < 0 || ix >= w) continue;
                            best = std::max(best, x.at(n, ch, iy, ix));
                        }
                    }
                    y.at(n, ch, oy, ox) = best;
                }
    check_finite(y, "maxpool2d");
    return y;
}

// Average pool with a fixed divisor of k*k, so zero padding dilutes border
// windows (count-include-pad).
template <typename T>
Tensor<T> avgpool2d(const Tensor<T>& x, std::int64_t k, std::int64_t stride, std::int64_t pad) {
    if (x.rank() != 4) throw ShapeError("avgpool2d: input must be [N,C,H,W]");
    const std::int64_t nb = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
    const std::int64_t ho = conv_out_extent(h, k, stride, pad);
    const std::int64_t wo = conv_out_extent(w, k, stride, pad);
    if (ho < 1 || wo < 1) throw ShapeError("avgpool2d: degenerate output extent");
    Tensor<T> y({nb, c, ho, wo});
    const T inv = T(1) / static_cast<T>(k * k);
    for (std::int64_t n = 0; n < nb; ++n)
        for (std::int64_t ch = 0; ch < c; ++ch)
            for (std::int64_t oy = 0; oy < ho; ++oy)
                for (std::int64_t ox = 0; ox < wo; ++ox) {
                    T acc = T(0);
                    for (std::int64_t ky = 0; ky < k; ++ky) {
                        const std::int64_t iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= h) continue;
                        for (std::int64_t kx = 0; kx < k; ++kx) {
                            const std::int64_t ix = ox * stride - pad + kx;
                            if (ix < 0 || ix >= w) continue;
                            acc += x.at(n, ch, iy, ix);
                        }
                    }
                    y.at(n, ch, oy, ox) = acc * inv;
                }
    check_finite(y, "avgpool2d");
    return y;
}

enum class StripAxis { Height, Width };

// Directional mean pooling. Height keeps the H axis (mean over W) and
// yields [N,C,H]; Width keeps W (mean over H) and yields [N,C,W].
template <typename T>
Tensor<T> strip_pool(const Tensor<T>& x, StripAxis axis) {
    if (x.rank() != 4) throw ShapeError("strip_pool: input must be [N,C,H,W]");
    const std::int64_t nb = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
    if (axis == StripAxis::Height) {
        Tensor<T> y({nb, c, h});
        const T inv = T(1) / static_cast<T>(w);
        for (std::int64_t n = 0; n < nb; ++n)
            for (std::int64_t ch = 0; ch < c; ++ch)
                for (std::int64_t i = 0; i < h; ++i) {
                    T acc = T(0);
                    for (std::int64_t j = 0; j < w; ++j) acc += x.at(n, ch, i, j);
                    y.at(n, ch, i) = acc * inv;
                }
        return y;
    }
    Tensor<T> y({nb, c, w});
    const T inv = T(1) / static_cast<T>(h);
    for (std::int64_t n = 0; n < nb; ++n)
        for (std::int64_t ch = 0; ch < c; ++ch)
            for (std::int64_t j = 0; j < w; ++j) {
                T acc = T(0);
                for (std::int64_t i = 0; i < h; ++i) acc += x.at(n, ch, i, j);
                y.at(n, ch, j) = acc * inv;
            }
    return y;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul: operands must be rank 2");
    if (a.extent(1) != b.extent(0))
        throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    const std::int64_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    Tensor<T> y({m, n});
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) {
            T acc = T(0);
            for (std::int64_t p = 0; p < k; ++p) acc += a.at(i, p) * b.at(p, j);
            y.at(i, j) = acc;
        }
    check_finite(y, "matmul");
    return y;
}

// In-place stable softmax over a strided span of n elements.
template <typename T>
void softmax_span(T* v, std::int64_t n, std::int64_t stride = 1) {
    T mx = v[0];
    for (std::int64_t i = 1; i < n; ++i) mx = std::max(mx, v[i * stride]);
    T sum = T(0);
    for (std::int64_t i = 0; i < n; ++i) {
        v[i * stride] = std::exp(v[i * stride] - mx);
        sum += v[i * stride];
    }
    const T inv = T(1) / sum;
    for (std::int64_t i = 0; i < n; ++i) v[i * stride] *= inv;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::int64_t axis) {
    if (axis < 0 || axis >= x.rank())
        throw ValueError("softmax: axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(x.rank()));
    Tensor<T> y = x;
    const std::int64_t n = x.extent(axis);
    std::int64_t inner = 1;  // product of extents after `axis`
    for (std::int64_t d = axis + 1; d < x.rank(); ++d) inner *= x.extent(d);
    const std::int64_t outer = x.size() / (n * inner);
    for (std::int64_t ou = 0; ou < outer; ++ou)
        for (std::int64_t in = 0; in < inner; ++in)
            softmax_span(y.data() + ou * n * inner + in, n, inner);
    check_finite(y, "softmax");
    return y;
}

template <typename T>
T sigmoid(T v) {
    return T(1) / (T(1) + std::exp(-v));
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    Tensor<T> y = x;
    for (std::int64_t i = 0; i < y.size(); ++i) y[i] = sigmoid(y[i]);
    return y;
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
    Tensor<T> y = x;
    for (std::int64_t i = 0; i < y.size(); ++i) y[i] = y[i] * sigmoid(y[i]);
    check_finite(y, "silu");
    return y;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> y = x;
    for (std::int64_t i = 0; i < y.size(); ++i) y[i] = std::max(y[i], T(0));
    return y;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T s) {
    Tensor<T> y = x;
    for (std::int64_t i = 0; i < y.size(); ++i) y[i] *= s;
    check_finite(y, "scale");
    return y;
}

namespace detail {
// Elementwise binary op with broadcasting over singleton extents only.
// Operand ranks must match; each axis pair must be equal or contain a 1.
template <typename T, typename F>
Tensor<T> broadcast_binary(const Tensor<T>& a, const Tensor<T>& b, F&& f, const char* opname) {
    if (a.rank() != b.rank())
        throw ShapeError(std::string(opname) + ": ranks differ, " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
    const std::int64_t r = a.rank();
    // extents padded to 4 with leading 1s; strides per operand, 0 on broadcast axes
    std::int64_t ext[4] = {1, 1, 1, 1};
    std::int64_t sa[4] = {0, 0, 0, 0}, sb[4] = {0, 0, 0, 0};
    std::int64_t ra = 1, rb = 1;
    for (std::int64_t d = r - 1; d >= 0; --d) {
        const std::int64_t ea = a.extent(d), eb = b.extent(d);
        if (ea != eb && ea != 1 && eb != 1)
            throw ShapeError(std::string(opname) + ": axis " + std::to_string(d) +
                             " extents " + std::to_string(ea) + " and " + std::to_string(eb) +
                             " are not broadcast-compatible");
        const std::int64_t pos = 4 - r + d;
        ext[pos] = std::max(ea, eb);
        sa[pos] = (ea == 1) ? 0 : ra;
        sb[pos] = (eb == 1) ? 0 : rb;
        ra *= ea;
        rb *= eb;
    }
    Shape out_shape;
    for (std::int64_t d = 0; d < r; ++d)
        out_shape.push_back(std::max(a.extent(d), b.extent(d)));
    Tensor<T> y(out_shape);
    std::int64_t idx = 0;
    for (std::int64_t i0 = 0; i0 < ext[0]; ++i0)
        for (std::int64_t i1 = 0; i1 < ext[1]; ++i1)
            for (std::int64_t i2 = 0; i2 < ext[2]; ++i2) {
                const std::int64_t oa = i0 * sa[0] + i1 * sa[1] + i2 * sa[2];
                const std::int64_t ob = i0 * sb[0] + i1 * sb[1] + i2 * sb[2];
                for (std::int64_t i3 = 0; i3 < ext[3]; ++i3)
                    y[idx++] = f(a[oa + i3 * sa[3]], b[ob + i3 * sb[3]]);
            }
    return y;
}
}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    auto y = detail::broadcast_binary(a, b, [](T u, T v) { return u + v; }, "add");
    check_finite(y, "add");
    return y;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    auto y = detail::broadcast_binary(a, b, [](T u, T v) { return u * v; }, "mul");
    check_finite(y, "mul");
    return y;
}

template <typename T>
Tensor<T> concat(const std::vector<const Tensor<T>*>& parts, std::int64_t axis) {
    if (parts.empty()) throw ValueError("concat: no inputs");
    const Tensor<T>& first = *parts[0];
    if (axis < 0 || axis >= first.rank()) throw ValueError("concat: axis out of range");
    std::int64_t cat_extent = 0;
    for (const auto* p : parts) {
        if (p->rank() != first.rank()) throw ShapeError("concat: ranks differ");
        for (std::int64_t d = 0; d < first.rank(); ++d)
            if (d != axis && p->extent(d) != first.extent(d))
                throw ShapeError("concat: axis " + std::to_string(d) + " extents differ, " +
                                 shape_str(p->shape()) + " vs " + shape_str(first.shape()));
        cat_extent += p->extent(axis);
    }
    Shape out_shape = first.shape();
    out_shape[static_cast<std::size_t>(axis)] = cat_extent;
    Tensor<T> y(out_shape);

    std::int64_t inner = 1;
    for (std::int64_t d = axis + 1; d < first.rank(); ++d) inner *= first.extent(d);
    std::int64_t outer = 1;
    for (std::int64_t d = 0; d < axis; ++d) outer *= first.extent(d);

    std::int64_t woff = 0;  // offset (in elements) of this part inside one outer block
    for (const auto* p : parts) {
        const std::int64_t block = p->extent(axis) * inner;
        for (std::int64_t ou = 0; ou < outer; ++ou)
            std::copy(p->data() + ou * block, p->data() + (ou + 1) * block,
                      y.data() + ou * cat_extent * inner + woff);
        woff += block;
    }
    return y;
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, std::int64_t axis) {
    return concat<T>({&a, &b}, axis);
}

// Slice [start, stop) along one axis.
template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::int64_t axis, std::int64_t start, std::int64_t stop) {
    if (axis < 0 || axis >= x.rank()) throw ValueError("slice: axis out of range");
    if (start < 0 || stop <= start || stop > x.extent(axis))
        throw ValueError("slice: bad range [" + std::to_string(start) + "," +
                         std::to_string(stop) + ") on axis of extent " +
                         std::to_string(x.extent(axis)));
    Shape out_shape = x.shape();
    out_shape[static_cast<std::size_t>(axis)] = stop - start;
    Tensor<T> y(out_shape);
    std::int64_t inner = 1;
    for (std::int64_t d = axis + 1; d < x.rank(); ++d) inner *= x.extent(d);
    std::int64_t outer = 1;
    for (std::int64_t d = 0; d < axis; ++d) outer *= x.extent(d);
    const std::int64_t in_block = x.extent(axis) * inner;
    const std::int64_t out_block = (stop - start) * inner;
    for (std::int64_t ou = 0; ou < outer; ++ou)
        std::copy(x.data() + ou * in_block + start * inner,
                  x.data() + ou * in_block + stop * inner, y.data() + ou * out_block);
    return y;
}

// Nearest-neighbor 2x upsample of H and W.
template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x) {
    if (x.rank() != 4) throw ShapeError("upsample_nearest2x: input must be [N,C,H,W]");
    const std::int64_t nb = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
    Tensor<T> y({nb, c, 2 * h, 2 * w});
    for (std::int64_t n = 0; n < nb; ++n)
        for (std::int64_t ch = 0; ch < c; ++ch)
            for (std::int64_t i = 0; i < 2 * h; ++i)
                for (std::int64_t j = 0; j < 2 * w; ++j)
                    y.at(n, ch, i, j) = x.at(n, ch, i / 2, j / 2);
    return y;
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& x) {
    if (x.rank() != 2) throw ShapeError("transpose2d: input must be rank 2");
    Tensor<T> y({x.extent(1), x.extent(0)});
    for (std::int64_t i = 0; i < x.extent(0); ++i)
        for (std::int64_t j = 0; j < x.extent(1); ++j) y.at(j, i) = x.at(i, j);
    return y;
}

// Copy-reshape: same element count, new extents.
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (numel(shape) != x.size())
        throw ShapeError("reshape: element count " + std::to_string(x.size()) +
                         " does not fit shape " + shape_str(shape));
    std::vector<T> data(x.data(), x.data() + x.size());
    return Tensor<T>(std::move(shape), std::move(data));
}

}  // namespace daponet
