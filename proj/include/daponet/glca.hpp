#pragma once

// GLCA: Global Localization Context Attention. Two branches applied in
// sequence: ELA gates the map locally from directional strip statistics,
// then a GC block adds a globally pooled, transformed context vector.

#include "layers.hpp"

namespace daponet {

// Efficient Localization Attention. Strip-pool each spatial axis, run a
// depthwise 1-D conv along the strip, normalize, squash to (0,1) and gate
// the input with the outer product of the two attention profiles:
//   out = x * a_h[N,C,H,1] * a_w[N,C,1,W]
template <typename T>
struct Ela {
    Tensor<T> conv_h, conv_w;  // [C, 1, k] depthwise kernels, no bias
    GroupNorm<T> gn;           // one affine shared by both axes
    std::int64_t k = 7;

    static Ela make(std::int64_t c, std::int64_t k = 7) {
        if (k % 2 == 0) throw ValueError("ela: kernel length must be odd");
        Ela e;
        e.conv_h = Tensor<T>({c, 1, k});
        e.conv_w = Tensor<T>({c, 1, k});
        e.gn = GroupNorm<T>::make(c, GroupNorm<T>::default_groups(c));
        e.k = k;
        return e;
    }

    void init(Rng& rng) {
        kaiming_uniform(conv_h, k, rng);
        kaiming_uniform(conv_w, k, rng);
        gn.init();
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        if (x.rank() != 4 || x.extent(1) != conv_h.extent(0))
            throw ShapeError("ela: input must be [N," + std::to_string(conv_h.extent(0)) +
                             ",H,W], got " + shape_str(x.shape()));
        const std::int64_t c = x.extent(1);
        const Tensor<T> sh = strip_pool(x, StripAxis::Height);  // [N,C,H]
        const Tensor<T> sw = strip_pool(x, StripAxis::Width);   // [N,C,W]
        Tensor<T> ah = sigmoid(gn.forward(conv1d(sh, conv_h, nullptr, c, k / 2)));
        Tensor<T> aw = sigmoid(gn.forward(conv1d(sw, conv_w, nullptr, c, k / 2)));
        ah = reshape(ah, {x.extent(0), c, x.extent(2), 1});
        aw = reshape(aw, {x.extent(0), c, 1, x.extent(3)});
        return mul(mul(x, ah), aw);
    }

    std::int64_t param_count() const {
        return conv_h.size() + conv_w.size() + gn.param_count();
    }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + ".conv_h", conv_h, false);
        f(prefix + ".conv_w", conv_w, false);
        gn.visit(prefix + ".gn", f);
    }
};

// Global Context block. A 1x1 key conv scores every position; softmax over
// H*W turns the scores into attention; the context vector is the attention-
// weighted sum of x (a [C,HW] x [HW,1] matrix product); a CLR + 1x1 conv
// transform of the context is added back to every position.
template <typename T>
struct Gc {
    Conv2dLayer<T> key;  // C -> 1
    ClrBlock<T> t1;      // C -> C/r with LayerNorm + ReLU
    Conv2dLayer<T> t2;   // C/r -> C, zero-initialized so a fresh block is the identity
    std::int64_t r = 4;

    static Gc make(std::int64_t c, std::int64_t r = 4) {
        if (r < 1 || c % r != 0)
            throw ShapeError("gc: reduction r=" + std::to_string(r) + " must divide C=" +
                             std::to_string(c));
        Gc g;
        g.key = Conv2dLayer<T>::make(c, 1, 1, 1, 0, true);
        g.t1 = ClrBlock<T>::make(c, c / r);
        g.t2 = Conv2dLayer<T>::make(c / r, c, 1, 1, 0, true);
        g.r = r;
        return g;
    }

    void init(Rng& rng) {
        key.init(rng);
        t1.init(rng);
        // t2 consumes no rng draws: weight and bias stay zero
        fill(t2.weight, T(0));
        fill(*t2.bias, T(0));
    }

    // Per-item spatial attention, [N, H*W], rows summing to 1.
    Tensor<T> attention(const Tensor<T>& x) const {
        const std::int64_t nb = x.extent(0), h = x.extent(2), w = x.extent(3);
        const Tensor<T> scores = key.forward(x);  // [N,1,H,W]
        Tensor<T> alpha({nb, h * w});
        std::copy(scores.data(), scores.data() + scores.size(), alpha.data());
        for (std::int64_t n = 0; n < nb; ++n) softmax_span(alpha.data() + n * h * w, h * w);
        return alpha;
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        const std::int64_t nb = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
        const Tensor<T> alpha = attention(x);
        Tensor<T> ctx({nb, c, 1, 1});
        for (std::int64_t n = 0; n < nb; ++n) {
            Tensor<T> an({h * w, 1});
            std::copy(alpha.data() + n * h * w, alpha.data() + (n + 1) * h * w, an.data());
            const Tensor<T> xs = reshape(slice(x, 0, n, n + 1), {c, h * w});
            const Tensor<T> v = matmul(xs, an);  // [C,1]
            std::copy(v.data(), v.data() + c, ctx.data() + n * c);
        }
        const Tensor<T> tr = t2.forward(t1.forward(ctx));  // [N,C,1,1]
        return add(x, tr);
    }

    std::int64_t param_count() const {
        return key.param_count() + t1.param_count() + t2.param_count();
    }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        key.visit(prefix + ".key", f);
        t1.visit(prefix + ".t1", f);
        t2.visit(prefix + ".t2", f);
    }
};

template <typename T>
struct Glca {
    Ela<T> ela;
    Gc<T> gc;

    static Glca make(std::int64_t c) {
        Glca g;
        g.ela = Ela<T>::make(c);
        g.gc = Gc<T>::make(c);
        return g;
    }

    void init(Rng& rng) {
        ela.init(rng);
        gc.init(rng);
    }

    // Fixed branch order: local refinement first, then global context.
    Tensor<T> forward(const Tensor<T>& x) const { return gc.forward(ela.forward(x)); }

    std::int64_t param_count() const { return ela.param_count() + gc.param_count(); }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        ela.visit(prefix + ".ela", f);
        gc.visit(prefix + ".gc", f);
    }
};

}  // namespace daponet
