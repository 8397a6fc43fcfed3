#pragma once

// Depthwise over-parameterized convolution. At train time the kernel is the
// product of two factors: a conventional factor W [C_out, D_mul, C_in] and a
// depthwise factor D [C_in, D_mul, KH*KW]. For inference the two fold into a
// single conventional kernel
//   W'[o,c,j] = sum_m W[o,m,c] * D[c,m,j]
// so the deploy form costs exactly as much as a plain convolution.

#include "layers.hpp"

namespace daponet {

// Test hook: when set, do_fold negates its first output coefficient so the
// fold-equivalence check must fail. Reachable only through a hidden CLI flag.
inline std::atomic<bool>& fault_inject_do_fold() {
    static std::atomic<bool> flag{false};
    return flag;
}

template <typename T>
Tensor<T> do_fold(const Tensor<T>& W, const Tensor<T>& D, std::int64_t kh, std::int64_t kw) {
    if (W.rank() != 3 || D.rank() != 3)
        throw ShapeError("do_fold: factors must be rank 3, got " + shape_str(W.shape()) +
                         " and " + shape_str(D.shape()));
    const std::int64_t co = W.extent(0), dmul = W.extent(1), ci = W.extent(2);
    if (D.extent(0) != ci || D.extent(1) != dmul || D.extent(2) != kh * kw)
        throw ShapeError("do_fold: depthwise factor " + shape_str(D.shape()) +
                         " inconsistent with conventional factor " + shape_str(W.shape()) +
                         " and kernel " + std::to_string(kh) + "x" + std::to_string(kw));
    if (dmul < kh * kw)
        throw ValueError("do_fold: D_mul=" + std::to_string(dmul) +
                         " violates over-parameterization D_mul >= KH*KW");
    Tensor<T> folded({co, ci, kh, kw});
    for (std::int64_t o = 0; o < co; ++o)
        for (std::int64_t c = 0; c < ci; ++c)
            for (std::int64_t j = 0; j < kh * kw; ++j) {
                T acc = T(0);
                for (std::int64_t m = 0; m < dmul; ++m) acc += W.at(o, m, c) * D.at(c, m, j);
                folded.at(o, c, j / kw, j % kw) = acc;
            }
    if (fault_inject_do_fold().load()) folded[0] = -folded[0];
    return folded;
}

inline std::int64_t do_param_count(std::int64_t ci, std::int64_t co, std::int64_t kh,
                                   std::int64_t kw, std::int64_t dmul, Mode mode) {
    if (mode == Mode::Deploy) return co * ci * kh * kw;
    return co * dmul * ci + ci * dmul * kh * kw;
}

template <typename T>
struct DoConv {
    std::int64_t ci = 0, co = 0, kh = 3, kw = 3, dmul = 9;
    std::int64_t stride = 1, pad = 1;
    Mode mode = Mode::Train;
    Tensor<T> W;       // [co, dmul, ci]     (train form)
    Tensor<T> D;       // [ci, dmul, kh*kw]  (train form)
    Tensor<T> weight;  // [co, ci, kh, kw]   (deploy form)

    // dmul = -1 selects the default D_mul = KH*KW.
    static DoConv make(std::int64_t ci, std::int64_t co, std::int64_t kh, std::int64_t kw,
                       std::int64_t stride, std::int64_t pad, Mode mode, std::int64_t dmul = -1) {
        DoConv dc;
        dc.ci = ci;
        dc.co = co;
        dc.kh = kh;
        dc.kw = kw;
        dc.dmul = dmul < 0 ? kh * kw : dmul;
        if (dc.dmul < kh * kw)
            throw ValueError("doconv: D_mul=" + std::to_string(dc.dmul) + " must be >= KH*KW=" +
                             std::to_string(kh * kw));
        dc.stride = stride;
        dc.pad = pad;
        dc.mode = mode;
        if (mode == Mode::Train) {
            dc.W = Tensor<T>({co, dc.dmul, ci});
            dc.D = Tensor<T>({ci, dc.dmul, kh * kw});
        } else {
            dc.weight = Tensor<T>({co, ci, kh, kw});
        }
        return dc;
    }

    // W is Kaiming-uniform over the effective fan-in; D starts identity-like
    // (identity block padded with zero rows when D_mul > KH*KW), so a fresh
    // DOConv computes exactly what its W factor describes.
    void init(Rng& rng) {
        if (mode == Mode::Deploy) {
            kaiming_uniform(weight, ci * kh * kw, rng);
            return;
        }
        kaiming_uniform(W, ci * kh * kw, rng);
        fill(D, T(0));
        for (std::int64_t c = 0; c < ci; ++c)
            for (std::int64_t j = 0; j < kh * kw; ++j) D.at(c, j, j) = T(1);
    }

    Tensor<T> fold() const {
        if (mode == Mode::Deploy) return weight;
        return do_fold(W, D, kh, kw);
    }

    DoConv to_deploy() const {
        DoConv dc = make(ci, co, kh, kw, stride, pad, Mode::Deploy, dmul);
        dc.weight = fold();
        return dc;
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        if (mode == Mode::Deploy) return conv2d(x, weight, nullptr, stride, pad);
        return forward_factored(x);
    }

    // Factored path: depthwise stage q[c,m] = sum_j D[c,m,j] * patch[c,j],
    // then conventional stage out[o] = sum_c sum_m W[o,m,c] * q[c,m].
    // Numerically equivalent to conv2d with the folded kernel.
    Tensor<T> forward_factored(const Tensor<T>& x) const {
        if (x.rank() != 4 || x.extent(1) != ci)
            throw ShapeError("doconv: input must be [N," + std::to_string(ci) + ",H,W], got " +
                             shape_str(x.shape()));
        const std::int64_t nb = x.extent(0), h = x.extent(2), wd = x.extent(3);
        const std::int64_t ho = conv_out_extent(h, kh, stride, pad);
        const std::int64_t wo = conv_out_extent(wd, kw, stride, pad);
        if (ho < 1 || wo < 1) throw ShapeError("doconv: degenerate output extent");
        Tensor<T> y({nb, co, ho, wo});
        std::vector<T> patch(static_cast<std::size_t>(ci * kh * kw));
        std::vector<T> q(static_cast<std::size_t>(ci * dmul));
        for (std::int64_t n = 0; n < nb; ++n)
            for (std::int64_t oy = 0; oy < ho; ++oy)
                for (std::int64_t ox = 0; ox < wo; ++ox) {
                    for (std::int64_t c = 0; c < ci; ++c)
                        for (std::int64_t ky = 0; ky < kh; ++ky)
                            for (std::int64_t kx = 0; kx < kw; ++kx) {
                                const std::int64_t iy = oy * stride - pad + ky;
                                const std::int64_t ix = ox * stride - pad + kx;
                                patch[static_cast<std::size_t>((c * kh + ky) * kw + kx)] =
                                    (iy < 0 || iy >= h || ix < 0 || ix >= wd)
                                        ? T(0)
                                        : x.at(n, c, iy, ix);
                            }
                    for (std::int64_t c = 0; c < ci; ++c)
                        for (std::int64_t m = 0; m < dmul; ++m) {
                            T acc = T(0);
                            for (std::int64_t j = 0; j < kh * kw; ++j)
                                acc += D.at(c, m, j) * patch[static_cast<std::size_t>(c * kh * kw + j)];
                            q[static_cast<std::size_t>(c * dmul + m)] = acc;
                        }
                    for (std::int64_t o = 0; o < co; ++o) {
                        T acc = T(0);
                        for (std::int64_t c = 0; c < ci; ++c)
                            for (std::int64_t m = 0; m < dmul; ++m)
                                acc += W.at(o, m, c) * q[static_cast<std::size_t>(c * dmul + m)];
                        y.at(n, o, oy, ox) = acc;
                    }
                }
        check_finite(y, "doconv");
        return y;
    }

    std::int64_t param_count() const { return do_param_count(ci, co, kh, kw, dmul, mode); }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        if (mode == Mode::Train) {
            f(prefix + ".w_factor", W, false);
            f(prefix + ".d_factor", D, false);
        } else {
            f(prefix + ".weight", weight, false);
        }
    }
};

}  // namespace daponet
