#pragma once

// Composite blocks: the PD Block (quarter-channel DOConv partial block),
// CPDA (cross-stage-partial wrapper around PD Blocks and one GLCA), the MCD
// multi-path downsampler, an SPPF tail, and the baseline substitutes used by
// the ablation toggles (C2f and a plain strided conv).
//
// Each block offers make/forward/init/visit plus fold(), which returns the
// deploy form with every BatchNorm and DOConv folded away.

#include <vector>

#include "doconv.hpp"
#include "glca.hpp"

namespace daponet {

// Partial block: the first C/4 channels run through a 3x3 DOConv + SiLU, the
// remaining 3C/4 bypass untouched; concat puts the processed part first.
template <typename T>
struct PdBlock {
    DoConv<T> dconv;
    std::int64_t channels = 0;
    bool linear_test = false;  // replaces SiLU by identity for algebraic tests

    static PdBlock make(std::int64_t c, Mode mode) {
        if (c % 4 != 0)
            throw ShapeError("pd block: channel extent " + std::to_string(c) +
                             " not divisible by 4");
        PdBlock b;
        b.dconv = DoConv<T>::make(c / 4, c / 4, 3, 3, 1, 1, mode);
        b.channels = c;
        return b;
    }

    void init(Rng& rng) { dconv.init(rng); }

    Tensor<T> forward(const Tensor<T>& x) const {
        if (x.extent(1) != channels)
            throw ShapeError("pd block: expected " + std::to_string(channels) + " channels, got " +
                             std::to_string(x.extent(1)));
        const std::int64_t q = channels / 4;
        Tensor<T> processed = dconv.forward(slice(x, 1, 0, q));
        if (!linear_test) processed = silu(processed);
        const Tensor<T> rest = slice(x, 1, q, channels);
        return concat(processed, rest, 1);
    }

    PdBlock fold() const {
        PdBlock b = *this;
        b.dconv = dconv.to_deploy();
        return b;
    }

    std::int64_t param_count() const { return dconv.param_count(); }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        dconv.visit(prefix + ".do", f);
    }
};

// CPDA. Entry 1x1 conv to 2h channels, split into (y0, y1); a chain of n PD
// Blocks grows from y1; GLCA refines the last chain output; everything is
// concatenated ((2+n)*h channels) and condensed by the exit 1x1 conv.
template <typename T>
struct CpdaBlock {
    ConvBlock<T> entry;
    std::vector<PdBlock<T>> pds;
    Glca<T> glca;
    ConvBlock<T> exit;
    std::int64_t hidden = 0;

    static CpdaBlock make(std::int64_t ci, std::int64_t co, std::int64_t n, Mode mode) {
        const std::int64_t h = co / 2;
        if (co % 2 != 0 || h % 4 != 0)
            throw ShapeError("cpda: output width " + std::to_string(co) +
                             " needs a hidden width divisible by 4, got h=" + std::to_string(h));
        CpdaBlock b;
        b.entry = ConvBlock<T>::make(ci, 2 * h, 1, 1, mode);
        for (std::int64_t i = 0; i < n; ++i) b.pds.push_back(PdBlock<T>::make(h, mode));
        b.glca = Glca<T>::make(h);
        b.exit = ConvBlock<T>::make((2 + n) * h, co, 1, 1, mode);
        b.hidden = h;
        return b;
    }

    void init(Rng& rng) {
        entry.init(rng);
        for (auto& pd : pds) pd.init(rng);
        glca.init(rng);
        exit.init(rng);
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        const Tensor<T> e = entry.forward(x);
        std::vector<Tensor<T>> parts;
        parts.push_back(slice(e, 1, 0, hidden));           // y0
        parts.push_back(slice(e, 1, hidden, 2 * hidden));  // y1
        for (const auto& pd : pds) parts.push_back(pd.forward(parts.back()));
        parts.back() = glca.forward(parts.back());
        std::vector<const Tensor<T>*> ptrs;
        for (const auto& p : parts) ptrs.push_back(&p);
        return exit.forward(concat(ptrs, 1));
    }

    CpdaBlock fold() const {
        CpdaBlock b = *this;
        b.entry = fold_bn(entry);
        for (auto& pd : b.pds) pd = pd.fold();
        b.exit = fold_bn(exit);
        return b;
    }

    std::int64_t param_count() const {
        std::int64_t p = entry.param_count() + glca.param_count() + exit.param_count();
        for (const auto& pd : pds) p += pd.param_count();
        return p;
    }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        entry.visit(prefix + ".entry", f);
        for (std::size_t i = 0; i < pds.size(); ++i)
            pds[i].visit(prefix + ".pd" + std::to_string(i + 1), f);
        glca.visit(prefix + ".glca", f);
        exit.visit(prefix + ".exit", f);
    }
};

// Residual unit of the baseline C2f substitute: two 3x3 CBs plus shortcut.
template <typename T>
struct Bottleneck {
    ConvBlock<T> cv1, cv2;

    static Bottleneck make(std::int64_t c, Mode mode) {
        Bottleneck b;
        b.cv1 = ConvBlock<T>::make(c, c, 3, 1, mode);
        b.cv2 = ConvBlock<T>::make(c, c, 3, 1, mode);
        return b;
    }

    void init(Rng& rng) {
        cv1.init(rng);
        cv2.init(rng);
    }

    Tensor<T> forward(const Tensor<T>& x) const { return add(x, cv2.forward(cv1.forward(x))); }

    Bottleneck fold() const {
        Bottleneck b;
        b.cv1 = fold_bn(cv1);
        b.cv2 = fold_bn(cv2);
        return b;
    }

    std::int64_t param_count() const { return cv1.param_count() + cv2.param_count(); }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        cv1.visit(prefix + ".cv1", f);
        cv2.visit(prefix + ".cv2", f);
    }
};

// Baseline substitute for CPDA (used when the cpda toggle is off).
template <typename T>
struct C2fBlock {
    ConvBlock<T> entry;
    std::vector<Bottleneck<T>> ms;
    ConvBlock<T> exit;
    std::int64_t hidden = 0;

    static C2fBlock make(std::int64_t ci, std::int64_t co, std::int64_t n, Mode mode) {
        if (co % 2 != 0) throw ShapeError("c2f: output width must be even");
        const std::int64_t h = co / 2;
        C2fBlock b;
        b.entry = ConvBlock<T>::make(ci, 2 * h, 1, 1, mode);
        for (std::int64_t i = 0; i < n; ++i) b.ms.push_back(Bottleneck<T>::make(h, mode));
        b.exit = ConvBlock<T>::make((2 + n) * h, co, 1, 1, mode);
        b.hidden = h;
        return b;
    }

    void init(Rng& rng) {
        entry.init(rng);
        for (auto& m : ms) m.init(rng);
        exit.init(rng);
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        const Tensor<T> e = entry.forward(x);
        std::vector<Tensor<T>> parts;
        parts.push_back(slice(e, 1, 0, hidden));
        parts.push_back(slice(e, 1, hidden, 2 * hidden));
        for (const auto& m : ms) parts.push_back(m.forward(parts.back()));
        std::vector<const Tensor<T>*> ptrs;
        for (const auto& p : parts) ptrs.push_back(&p);
        return exit.forward(concat(ptrs, 1));
    }

    C2fBlock fold() const {
        C2fBlock b = *this;
        b.entry = fold_bn(entry);
        for (auto& m : b.ms) m = m.fold();
        b.exit = fold_bn(exit);
        return b;
    }

    std::int64_t param_count() const {
        std::int64_t p = entry.param_count() + exit.param_count();
        for (const auto& m : ms) p += m.param_count();
        return p;
    }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        entry.visit(prefix + ".entry", f);
        for (std::size_t i = 0; i < ms.size(); ++i)
            ms[i].visit(prefix + ".m" + std::to_string(i + 1), f);
        exit.visit(prefix + ".exit", f);
    }
};

// MCD downsampler: three stride-2 paths concatenated.
//   conv path: 3x3 s2 CB to C_out/2
//   max path:  2x2 maxpool + 1x1 CB to C_out/4
//   avg path:  2x2 avgpool + 1x1 CB to C_out/4
template <typename T>
struct McdBlock {
    ConvBlock<T> conv_path, max_path, avg_path;

    static McdBlock make(std::int64_t ci, std::int64_t co, Mode mode) {
        if (co % 4 != 0)
            throw ShapeError("mcd: output width " + std::to_string(co) + " not divisible by 4");
        McdBlock b;
        b.conv_path = ConvBlock<T>::make(ci, co / 2, 3, 2, mode);
        b.max_path = ConvBlock<T>::make(ci, co / 4, 1, 1, mode);
        b.avg_path = ConvBlock<T>::make(ci, co / 4, 1, 1, mode);
        return b;
    }

    void init(Rng& rng) {
        conv_path.init(rng);
        max_path.init(rng);
        avg_path.init(rng);
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        const Tensor<T> a = conv_path.forward(x);
        const Tensor<T> b = max_path.forward(maxpool2d(x, 2, 2, 0));
        const Tensor<T> c = avg_path.forward(avgpool2d(x, 2, 2, 0));
        return concat<T>({&a, &b, &c}, 1);
    }

    McdBlock fold() const {
        McdBlock b;
        b.conv_path = fold_bn(conv_path);
        b.max_path = fold_bn(max_path);
        b.avg_path = fold_bn(avg_path);
        return b;
    }

    std::int64_t param_count() const {
        return conv_path.param_count() + max_path.param_count() + avg_path.param_count();
    }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        conv_path.visit(prefix + ".conv_path", f);
        max_path.visit(prefix + ".max_path", f);
        avg_path.visit(prefix + ".avg_path", f);
    }
};

// SPPF tail: 1x1 reduce to C/2, three chained same-pad k=5 maxpools, concat
// of the four maps, 1x1 expand back to C.
template <typename T>
struct SppfBlock {
    ConvBlock<T> cv1, cv2;

    static SppfBlock make(std::int64_t c, Mode mode) {
        if (c % 2 != 0) throw ShapeError("sppf: channel extent must be even");
        SppfBlock b;
        b.cv1 = ConvBlock<T>::make(c, c / 2, 1, 1, mode);
        b.cv2 = ConvBlock<T>::make(2 * c, c, 1, 1, mode);
        return b;
    }

    void init(Rng& rng) {
        cv1.init(rng);
        cv2.init(rng);
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        const Tensor<T> a = cv1.forward(x);
        const Tensor<T> b = maxpool2d(a, 5, 1, 2);
        const Tensor<T> c = maxpool2d(b, 5, 1, 2);
        const Tensor<T> d = maxpool2d(c, 5, 1, 2);
        return cv2.forward(concat<T>({&a, &b, &c, &d}, 1));
    }

    SppfBlock fold() const {
        SppfBlock b;
        b.cv1 = fold_bn(cv1);
        b.cv2 = fold_bn(cv2);
        return b;
    }

    std::int64_t param_count() const { return cv1.param_count() + cv2.param_count(); }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        cv1.visit(prefix + ".cv1", f);
        cv2.visit(prefix + ".cv2", f);
    }
};

// Downsampler slot: MCD, or a plain 3x3 stride-2 CB when the toggle is off.
template <typename T>
struct DownBlock {
    std::optional<McdBlock<T>> mcd;
    std::optional<ConvBlock<T>> conv;

    static DownBlock make(std::int64_t ci, std::int64_t co, bool use_mcd, Mode mode) {
        DownBlock b;
        if (use_mcd)
            b.mcd = McdBlock<T>::make(ci, co, mode);
        else
            b.conv = ConvBlock<T>::make(ci, co, 3, 2, mode);
        return b;
    }

    void init(Rng& rng) { mcd ? mcd->init(rng) : conv->init(rng); }

    Tensor<T> forward(const Tensor<T>& x) const {
        return mcd ? mcd->forward(x) : conv->forward(x);
    }

    DownBlock fold() const {
        DownBlock b;
        if (mcd)
            b.mcd = mcd->fold();
        else
            b.conv = fold_bn(*conv);
        return b;
    }

    std::int64_t param_count() const { return mcd ? mcd->param_count() : conv->param_count(); }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        if (mcd)
            mcd->visit(prefix, f);
        else
            conv->visit(prefix, f);
    }
};

// Stage slot: CPDA, or the baseline C2f when the toggle is off.
template <typename T>
struct StageBlock {
    std::optional<CpdaBlock<T>> cpda;
    std::optional<C2fBlock<T>> c2f;

    static StageBlock make(std::int64_t ci, std::int64_t co, std::int64_t n, bool use_cpda,
                           Mode mode) {
        StageBlock b;
        if (use_cpda)
            b.cpda = CpdaBlock<T>::make(ci, co, n, mode);
        else
            b.c2f = C2fBlock<T>::make(ci, co, n, mode);
        return b;
    }

    void init(Rng& rng) { cpda ? cpda->init(rng) : c2f->init(rng); }

    Tensor<T> forward(const Tensor<T>& x) const {
        return cpda ? cpda->forward(x) : c2f->forward(x);
    }

    StageBlock fold() const {
        StageBlock b;
        if (cpda)
            b.cpda = cpda->fold();
        else
            b.c2f = c2f->fold();
        return b;
    }

    std::int64_t param_count() const { return cpda ? cpda->param_count() : c2f->param_count(); }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        if (cpda)
            cpda->visit(prefix, f);
        else
            c2f->visit(prefix, f);
    }
};

}  // namespace daponet
