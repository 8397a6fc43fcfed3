#pragma once

// Analytic input-gradients for a fixed subset of primitives, plus the
// finite-difference checker that validates them. Training is out of scope;
// these backward passes exist solely so the numerics can be verified.
//
// grad_check builds a small double-precision case for the requested op,
// forms the scalar loss L = sum(r * f(x)) with a fixed random weighting r,
// and returns the maximum over input coordinates of
//   |analytic - central_difference| / (|analytic| + |central_difference| + 1e-12)
// with step 1e-5.

#include <functional>

#include "layers.hpp"

namespace daponet {

template <typename T>
Tensor<T> conv2d_backward_input(const Tensor<T>& dy, const Tensor<T>& w, const Shape& x_shape,
                                Int2 stride, Int2 pad) {
    Tensor<T> dx(x_shape);
    const std::int64_t nb = dy.extent(0), co = dy.extent(1), ho = dy.extent(2), wo = dy.extent(3);
    const std::int64_t ci = w.extent(1), kh = w.extent(2), kw = w.extent(3);
    const std::int64_t h = x_shape[2], wd = x_shape[3];
    for (std::int64_t n = 0; n < nb; ++n)
        for (std::int64_t o = 0; o < co; ++o)
            for (std::int64_t oy = 0; oy < ho; ++oy)
                for (std::int64_t ox = 0; ox < wo; ++ox) {
                    const T g = dy.at(n, o, oy, ox);
                    for (std::int64_t c = 0; c < ci; ++c)
                        for (std::int64_t ky = 0; ky < kh; ++ky) {
                            const std::int64_t iy = oy * stride.h - pad.h + ky;
                            if (iy < 0 || iy >= h) continue;
                            for (std::int64_t kx = 0; kx < kw; ++kx) {
                                const std::int64_t ix = ox * stride.w - pad.w + kx;
                                if (ix < 0 || ix >= wd) continue;
                                dx.at(n, c, iy, ix) += g * w.at(o, c, ky, kx);
                            }
                        }
                }
    return dx;
}

template <typename T>
Tensor<T> conv1d_backward_input(const Tensor<T>& dy, const Tensor<T>& w, const Shape& x_shape,
                                std::int64_t groups, std::int64_t pad) {
    Tensor<T> dx(x_shape);
    const std::int64_t nb = dy.extent(0), co = dy.extent(1), lo = dy.extent(2);
    const std::int64_t cig = w.extent(1), k = w.extent(2);
    const std::int64_t len = x_shape[2];
    const std::int64_t co_per_g = co / groups;
    for (std::int64_t n = 0; n < nb; ++n)
        for (std::int64_t o = 0; o < co; ++o) {
            const std::int64_t ci_base = (o / co_per_g) * cig;
            for (std::int64_t op = 0; op < lo; ++op) {
                const T g = dy.at(n, o, op);
                for (std::int64_t c = 0; c < cig; ++c)
                    for (std::int64_t kk = 0; kk < k; ++kk) {
                        const std::int64_t ip = op - pad + kk;
                        if (ip < 0 || ip >= len) continue;
                        dx.at(n, ci_base + c, ip) += g * w.at(o, c, kk);
                    }
            }
        }
    return dx;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> matmul_backward(const Tensor<T>& a, const Tensor<T>& b,
                                                const Tensor<T>& dy) {
    return {matmul(dy, transpose2d(b)), matmul(transpose2d(a), dy)};
}

template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& x, const Tensor<T>& dy) {
    Tensor<T> dx = dy;
    for (std::int64_t i = 0; i < x.size(); ++i) {
        const T s = sigmoid(x[i]);
        dx[i] *= s * (T(1) - s);
    }
    return dx;
}

template <typename T>
Tensor<T> silu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
    Tensor<T> dx = dy;
    for (std::int64_t i = 0; i < x.size(); ++i) {
        const T s = sigmoid(x[i]);
        dx[i] *= s + x[i] * s * (T(1) - s);
    }
    return dx;
}

// dx = y * (dy - sum(dy * y)) per softmax span; y is the forward output.
template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& y, const Tensor<T>& dy, std::int64_t axis) {
    Tensor<T> dx = dy;
    const std::int64_t n = y.extent(axis);
    std::int64_t inner = 1;
    for (std::int64_t d = axis + 1; d < y.rank(); ++d) inner *= y.extent(d);
    const std::int64_t outer = y.size() / (n * inner);
    for (std::int64_t ou = 0; ou < outer; ++ou)
        for (std::int64_t in = 0; in < inner; ++in) {
            const std::int64_t base = ou * n * inner + in;
            T dot = T(0);
            for (std::int64_t i = 0; i < n; ++i) dot += dy[base + i * inner] * y[base + i * inner];
            for (std::int64_t i = 0; i < n; ++i)
                dx[base + i * inner] = y[base + i * inner] * (dy[base + i * inner] - dot);
        }
    return dx;
}

// Input gradient of GroupNorm with affine gamma (beta drops out).
template <typename T>
Tensor<T> groupnorm_backward(const Tensor<T>& x, const Tensor<T>& gamma, std::int64_t groups,
                             T eps, const Tensor<T>& dy) {
    const std::int64_t nb = x.extent(0), c = x.extent(1);
    const std::int64_t sp = x.size() / (nb * c);
    const std::int64_t cpg = c / groups;
    const std::int64_t m = cpg * sp;
    Tensor<T> dx(x.shape());
    for (std::int64_t n = 0; n < nb; ++n)
        for (std::int64_t g = 0; g < groups; ++g) {
            const std::int64_t base = (n * c + g * cpg) * sp;
            T mean = T(0);
            for (std::int64_t i = 0; i < m; ++i) mean += x[base + i];
            mean /= static_cast<T>(m);
            T var = T(0);
            for (std::int64_t i = 0; i < m; ++i) {
                const T d = x[base + i] - mean;
                var += d * d;
            }
            var /= static_cast<T>(m);
            const T inv = T(1) / std::sqrt(var + eps);
            // dyh = dy * gamma; dx = inv * (dyh - mean(dyh) - xhat * mean(dyh * xhat))
            T mean_dyh = T(0), mean_dyh_xhat = T(0);
            for (std::int64_t i = 0; i < m; ++i) {
                const T xhat = (x[base + i] - mean) * inv;
                const T dyh = dy[base + i] * gamma[g * cpg + i / sp];
                mean_dyh += dyh;
                mean_dyh_xhat += dyh * xhat;
            }
            mean_dyh /= static_cast<T>(m);
            mean_dyh_xhat /= static_cast<T>(m);
            for (std::int64_t i = 0; i < m; ++i) {
                const T xhat = (x[base + i] - mean) * inv;
                const T dyh = dy[base + i] * gamma[g * cpg + i / sp];
                dx[base + i] = inv * (dyh - mean_dyh - xhat * mean_dyh_xhat);
            }
        }
    return dx;
}

enum class GradOp { Conv2d, Conv1d, Matmul, Sigmoid, Silu, Softmax, GroupNorm };

inline const char* grad_op_name(GradOp op) {
    switch (op) {
        case GradOp::Conv2d: return "conv2d";
        case GradOp::Conv1d: return "conv1d";
        case GradOp::Matmul: return "matmul";
        case GradOp::Sigmoid: return "sigmoid";
        case GradOp::Silu: return "silu";
        case GradOp::Softmax: return "softmax";
        case GradOp::GroupNorm: return "groupnorm";
    }
    return "?";
}

namespace detail {

// Compare an analytic input-gradient against central differences on a
// double-precision functional f: Tensor -> Tensor.
inline double fd_compare(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                         Tensor<double> x, const Tensor<double>& dx_analytic,
                         const Tensor<double>& r) {
    const double h = 1e-5;
    double worst = 0.0;
    for (std::int64_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const Tensor<double> yp = f(x);
        x[i] = keep - h;
        const Tensor<double> ym = f(x);
        x[i] = keep;
        double fd = 0.0;
        for (std::int64_t j = 0; j < yp.size(); ++j) fd += r[j] * (yp[j] - ym[j]);
        fd /= 2.0 * h;
        const double a = dx_analytic[i];
        const double rel = std::abs(a - fd) / (std::abs(a) + std::abs(fd) + 1e-12);
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace detail

// Runs the finite-difference check for one op on a small random case and
// returns the worst relative error. Tensors stay below 64 elements so the
// O(elements) probing loop remains fast.
inline double grad_check(GradOp op, Rng& rng) {
    auto rnd = [&rng](Shape s) { return rng.uniform_tensor<double>(std::move(s), -1.0, 1.0); };
    switch (op) {
        case GradOp::Conv2d: {
            const Tensor<double> w = rnd({3, 2, 3, 3});
            const Tensor<double> x = rnd({1, 2, 4, 4});
            auto f = [&w](const Tensor<double>& v) {
                return conv2d(v, w, nullptr, Int2{1, 1}, Int2{1, 1});
            };
            const Tensor<double> y = f(x);
            const Tensor<double> r = rnd(y.shape());
            const Tensor<double> dx = conv2d_backward_input(r, w, x.shape(), Int2{1, 1}, Int2{1, 1});
            return detail::fd_compare(f, x, dx, r);
        }
        case GradOp::Conv1d: {
            const Tensor<double> w = rnd({4, 2, 3});
            const Tensor<double> x = rnd({1, 4, 8});
            auto f = [&w](const Tensor<double>& v) { return conv1d(v, w, nullptr, 2, 1); };
            const Tensor<double> y = f(x);
            const Tensor<double> r = rnd(y.shape());
            const Tensor<double> dx = conv1d_backward_input(r, w, x.shape(), 2, 1);
            return detail::fd_compare(f, x, dx, r);
        }
        case GradOp::Matmul: {
            const Tensor<double> a = rnd({3, 4});
            const Tensor<double> b = rnd({4, 5});
            const Tensor<double> r = rnd({3, 5});
            const auto [da, db] = matmul_backward(a, b, r);
            auto fa = [&b](const Tensor<double>& v) { return matmul(v, b); };
            auto fb = [&a](const Tensor<double>& v) { return matmul(a, v); };
            return std::max(detail::fd_compare(fa, a, da, r), detail::fd_compare(fb, b, db, r));
        }
        case GradOp::Sigmoid: {
            const Tensor<double> x = rnd({2, 3, 4});
            const Tensor<double> r = rnd(x.shape());
            auto f = [](const Tensor<double>& v) { return sigmoid(v); };
            return detail::fd_compare(f, x, sigmoid_backward(x, r), r);
        }
        case GradOp::Silu: {
            const Tensor<double> x = rnd({2, 3, 4});
            const Tensor<double> r = rnd(x.shape());
            auto f = [](const Tensor<double>& v) { return silu(v); };
            return detail::fd_compare(f, x, silu_backward(x, r), r);
        }
        case GradOp::Softmax: {
            const Tensor<double> x = rnd({3, 4});
            const Tensor<double> r = rnd(x.shape());
            auto f = [](const Tensor<double>& v) { return softmax(v, 1); };
            return detail::fd_compare(f, x, softmax_backward(f(x), r, 1), r);
        }
        case GradOp::GroupNorm: {
            GroupNorm<double> gn = GroupNorm<double>::make(8, 4);
            gn.gamma = rnd({8});
            gn.beta = rnd({8});
            const Tensor<double> x = rnd({1, 8, 2, 2});
            const Tensor<double> r = rnd(x.shape());
            auto f = [&gn](const Tensor<double>& v) { return gn.forward(v); };
            return detail::fd_compare(f, x, groupnorm_backward(x, gn.gamma, gn.groups, gn.eps, r),
                                      r);
        }
    }
    throw ValueError("grad_check: op has no analytic backward");
}

}  // namespace daponet
