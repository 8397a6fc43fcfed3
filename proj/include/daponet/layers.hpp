#pragma once

// Parameterized layers: Conv, BatchNorm and the CB block (Conv+BN+act),
// GroupNorm, LayerNorm and the CLR block (Conv+LayerNorm+ReLU), plus seeded
// initialization and BatchNorm folding.
//
// Every layer exposes visit(prefix, f) calling f(name, tensor, is_buffer)
// over its parameters in a fixed order. That order defines both the weight
// container layout and the Rng draw order during initialization, so it must
// not change between releases.

#include <optional>
#include <string>
#include <utility>

#include "ops.hpp"

namespace daponet {

enum class Act { None, SiLU, ReLU, Sigmoid };
enum class Mode { Train, Deploy };

inline const char* act_name(Act a) {
    switch (a) {
        case Act::None: return "none";
        case Act::SiLU: return "silu";
        case Act::ReLU: return "relu";
        case Act::Sigmoid: return "sigmoid";
    }
    return "?";
}

inline const char* mode_name(Mode m) { return m == Mode::Train ? "train" : "deploy"; }

template <typename T>
Tensor<T> apply_act(const Tensor<T>& x, Act act) {
    switch (act) {
        case Act::None: return x;
        case Act::SiLU: return silu(x);
        case Act::ReLU: return relu(x);
        case Act::Sigmoid: return sigmoid(x);
    }
    throw ValueError("apply_act: unknown activation");
}

// Kaiming-uniform fill, bound sqrt(6/fan_in), in flat index order.
template <typename T>
void kaiming_uniform(Tensor<T>& w, std::int64_t fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (std::int64_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
void fill(Tensor<T>& t, T v) {
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = v;
}

template <typename T>
struct Conv2dLayer {
    Tensor<T> weight;  // [C_out, C_in, K, K]
    std::optional<Tensor<T>> bias;
    std::int64_t stride = 1;
    std::int64_t pad = 0;

    static Conv2dLayer make(std::int64_t ci, std::int64_t co, std::int64_t k,
                            std::int64_t stride, std::int64_t pad, bool with_bias) {
        Conv2dLayer l;
        l.weight = Tensor<T>({co, ci, k, k});
        if (with_bias) l.bias = Tensor<T>({co});
        l.stride = stride;
        l.pad = pad;
        return l;
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        return conv2d(x, weight, bias ? &*bias : nullptr, stride, pad);
    }

    void init(Rng& rng) {
        kaiming_uniform(weight, weight.extent(1) * weight.extent(2) * weight.extent(3), rng);
        if (bias) fill(*bias, T(0));
    }

    std::int64_t param_count() const { return weight.size() + (bias ? bias->size() : 0); }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + ".weight", weight, false);
        if (bias) f(prefix + ".bias", *bias, false);
    }
};

// Inference-form batch normalization driven by stored running statistics.
// gamma/beta are learnable; running_mean/var are buffers (stored with the
// weights but not counted as parameters).
template <typename T>
struct BatchNorm {
    Tensor<T> gamma, beta, running_mean, running_var;  // each [C]
    T eps = static_cast<T>(1e-5);

    static BatchNorm make(std::int64_t c) {
        BatchNorm bn;
        bn.gamma = Tensor<T>({c});
        bn.beta = Tensor<T>({c});
        bn.running_mean = Tensor<T>({c});
        bn.running_var = Tensor<T>({c});
        bn.init();
        return bn;
    }

    void init() {
        fill(gamma, T(1));
        fill(beta, T(0));
        fill(running_mean, T(0));
        fill(running_var, T(1));
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        if (x.rank() != 4 || x.extent(1) != gamma.extent(0))
            throw ShapeError("batchnorm: input channel extent " +
                             std::to_string(x.rank() == 4 ? x.extent(1) : -1) +
                             " does not match " + std::to_string(gamma.extent(0)));
        if (verify_mode())
            for (std::int64_t c = 0; c < running_var.size(); ++c)
                if (running_var[c] < T(0)) throw ValueError("batchnorm: negative running_var");
        Tensor<T> y = x;
        const std::int64_t nb = x.extent(0), cn = x.extent(1), hw = x.extent(2) * x.extent(3);
        for (std::int64_t n = 0; n < nb; ++n)
            for (std::int64_t c = 0; c < cn; ++c) {
                const T inv = T(1) / std::sqrt(running_var[c] + eps);
                const T m = running_mean[c], g = gamma[c], b = beta[c];
                T* row = y.data() + (n * cn + c) * hw;
                // fixed op order (x - m) * inv * g + b, mirrored by the oracle
                for (std::int64_t i = 0; i < hw; ++i) row[i] = (row[i] - m) * inv * g + b;
            }
        check_finite(y, "batchnorm");
        return y;
    }

    std::int64_t param_count() const { return gamma.size() + beta.size(); }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + ".gamma", gamma, false);
        f(prefix + ".beta", beta, false);
        f(prefix + ".running_mean", running_mean, true);
        f(prefix + ".running_var", running_var, true);
    }
};

// The CB block. Train form: conv (no bias) + BN + act. Deploy form (after
// fold_bn or direct construction): conv with bias + act, no BN.
template <typename T>
struct ConvBlock {
    Conv2dLayer<T> conv;
    std::optional<BatchNorm<T>> bn;
    Act act = Act::SiLU;

    static ConvBlock make(std::int64_t ci, std::int64_t co, std::int64_t k, std::int64_t stride,
                          Mode mode, Act act = Act::SiLU) {
        ConvBlock cb;
        cb.conv = Conv2dLayer<T>::make(ci, co, k, stride, k / 2, mode == Mode::Deploy);
        if (mode == Mode::Train) cb.bn = BatchNorm<T>::make(co);
        cb.act = act;
        return cb;
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        Tensor<T> y = conv.forward(x);
        if (bn) y = bn->forward(y);
        return apply_act(y, act);
    }

    void init(Rng& rng) {
        conv.init(rng);
        if (bn) bn->init();
    }

    std::int64_t out_channels() const { return conv.weight.extent(0); }

    std::int64_t param_count() const {
        return conv.param_count() + (bn ? bn->param_count() : 0);
    }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        conv.visit(prefix + ".conv", f);
        if (bn) bn->visit(prefix + ".bn", f);
    }
};

// Fold BN statistics into the convolution: w' = w * gamma/sqrt(var+eps),
// b' = beta - mean * gamma/sqrt(var+eps). Output-preserving.
template <typename T>
ConvBlock<T> fold_bn(const ConvBlock<T>& cb) {
    if (!cb.bn) throw ValueError("fold_bn: block carries no batchnorm");
    const BatchNorm<T>& bn = *cb.bn;
    ConvBlock<T> out;
    out.act = cb.act;
    out.conv = cb.conv;
    const std::int64_t co = cb.conv.weight.extent(0);
    const std::int64_t per_out = cb.conv.weight.size() / co;
    Tensor<T> bias({co});
    for (std::int64_t o = 0; o < co; ++o) {
        // scale in double so the fold itself adds no single-precision noise
        const double s = static_cast<double>(bn.gamma[o]) /
                         std::sqrt(static_cast<double>(bn.running_var[o]) +
                                   static_cast<double>(bn.eps));
        T* wrow = out.conv.weight.data() + o * per_out;
        for (std::int64_t i = 0; i < per_out; ++i)
            wrow[i] = static_cast<T>(static_cast<double>(wrow[i]) * s);
        double b = static_cast<double>(bn.beta[o]) - static_cast<double>(bn.running_mean[o]) * s;
        if (cb.conv.bias) b += static_cast<double>((*cb.conv.bias)[o]) * s;
        bias[o] = static_cast<T>(b);
    }
    out.conv.bias = std::move(bias);
    return out;
}

// Group normalization over [N,C,H,W] or [N,C,L]; each group normalizes
// (C/groups * spatial) elements per batch item with biased variance.
template <typename T>
struct GroupNorm {
    Tensor<T> gamma, beta;  // [C]
    std::int64_t groups = 1;
    T eps = static_cast<T>(1e-5);

    static std::int64_t default_groups(std::int64_t c) { return std::min<std::int64_t>(16, c); }

    static GroupNorm make(std::int64_t c, std::int64_t groups) {
        if (groups < 1 || c % groups != 0)
            throw ShapeError("groupnorm: groups=" + std::to_string(groups) +
                             " does not divide C=" + std::to_string(c));
        GroupNorm gn;
        gn.gamma = Tensor<T>({c});
        gn.beta = Tensor<T>({c});
        gn.groups = groups;
        gn.init();
        return gn;
    }

    void init() {
        fill(gamma, T(1));
        fill(beta, T(0));
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        if (x.rank() != 3 && x.rank() != 4)
            throw ShapeError("groupnorm: input must be [N,C,L] or [N,C,H,W]");
        const std::int64_t c = x.extent(1);
        if (c != gamma.extent(0))
            throw ShapeError("groupnorm: channel extent mismatch");
        const std::int64_t nb = x.extent(0);
        const std::int64_t sp = x.size() / (nb * c);  // spatial elements per channel
        const std::int64_t cpg = c / groups;
        const std::int64_t m = cpg * sp;  // elements per group
        Tensor<T> y = x;
        for (std::int64_t n = 0; n < nb; ++n)
            for (std::int64_t g = 0; g < groups; ++g) {
                T* base = y.data() + (n * c + g * cpg) * sp;
                T mean = T(0);
                for (std::int64_t i = 0; i < m; ++i) mean += base[i];
                mean /= static_cast<T>(m);
                T var = T(0);
                for (std::int64_t i = 0; i < m; ++i) {
                    const T d = base[i] - mean;
                    var += d * d;
                }
                var /= static_cast<T>(m);
                const T inv = T(1) / std::sqrt(var + eps);
                for (std::int64_t cc = 0; cc < cpg; ++cc) {
                    const T gm = gamma[g * cpg + cc], bt = beta[g * cpg + cc];
                    T* row = base + cc * sp;
                    for (std::int64_t i = 0; i < sp; ++i) row[i] = (row[i] - mean) * inv * gm + bt;
                }
            }
        check_finite(y, "groupnorm");
        return y;
    }

    std::int64_t param_count() const { return gamma.size() + beta.size(); }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + ".gamma", gamma, false);
        f(prefix + ".beta", beta, false);
    }
};

// Layer normalization over the channel axis per spatial position.
template <typename T>
struct LayerNorm {
    Tensor<T> gamma, beta;  // [C]
    T eps = static_cast<T>(1e-5);

    static LayerNorm make(std::int64_t c) {
        LayerNorm ln;
        ln.gamma = Tensor<T>({c});
        ln.beta = Tensor<T>({c});
        ln.init();
        return ln;
    }

    void init() {
        fill(gamma, T(1));
        fill(beta, T(0));
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        if (x.rank() != 4 || x.extent(1) != gamma.extent(0))
            throw ShapeError("layernorm: input must be [N,C,H,W] with C=" +
                             std::to_string(gamma.extent(0)));
        const std::int64_t nb = x.extent(0), c = x.extent(1), hw = x.extent(2) * x.extent(3);
        Tensor<T> y = x;
        for (std::int64_t n = 0; n < nb; ++n)
            for (std::int64_t i = 0; i < hw; ++i) {
                T mean = T(0);
                for (std::int64_t cc = 0; cc < c; ++cc) mean += y[(n * c + cc) * hw + i];
                mean /= static_cast<T>(c);
                T var = T(0);
                for (std::int64_t cc = 0; cc < c; ++cc) {
                    const T d = y[(n * c + cc) * hw + i] - mean;
                    var += d * d;
                }
                var /= static_cast<T>(c);
                const T inv = T(1) / std::sqrt(var + eps);
                for (std::int64_t cc = 0; cc < c; ++cc) {
                    T& v = y[(n * c + cc) * hw + i];
                    v = (v - mean) * inv * gamma[cc] + beta[cc];
                }
            }
        check_finite(y, "layernorm");
        return y;
    }

    std::int64_t param_count() const { return gamma.size() + beta.size(); }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + ".gamma", gamma, false);
        f(prefix + ".beta", beta, false);
    }
};

// The CLR block: Conv + LayerNorm + ReLU (the global-context transform unit).
template <typename T>
struct ClrBlock {
    Conv2dLayer<T> conv;
    LayerNorm<T> ln;

    static ClrBlock make(std::int64_t ci, std::int64_t co) {
        ClrBlock b;
        b.conv = Conv2dLayer<T>::make(ci, co, 1, 1, 0, true);
        b.ln = LayerNorm<T>::make(co);
        return b;
    }

    Tensor<T> forward(const Tensor<T>& x) const { return relu(ln.forward(conv.forward(x))); }

    void init(Rng& rng) {
        conv.init(rng);
        ln.init();
    }

    std::int64_t param_count() const { return conv.param_count() + ln.param_count(); }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        conv.visit(prefix + ".conv", f);
        ln.visit(prefix + ".ln", f);
    }
};

}  // namespace daponet
