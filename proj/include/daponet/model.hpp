#pragma once

// Full network assembly: backbone (stem + four down/stage pairs + SPPF),
// PAN-style neck (two top-down and two bottom-up fusions), and a per-scale
// anchor-free head (one 1x1 reg conv to 4*dfl_bins channels and one 1x1 cls
// conv to num_classes channels). Also: configuration presets, seeded build,
// the parameter/FLOP summary, and weight-store import/export.

#include <array>
#include <iomanip>
#include <sstream>

#include "blocks.hpp"
#include "weights.hpp"

namespace daponet {

struct ModelConfig {
    std::int64_t input_h = 640;
    std::int64_t input_w = 640;
    std::int64_t num_classes = 7;
    std::vector<std::int64_t> stage_channels = {16, 32, 64, 128, 256};
    std::vector<std::int64_t> cpda_depths = {1, 2, 2, 1};
    // Neck widths {t4, p3, p4, p5}; empty selects the derived default
    // {c4, c3, c4, c5}. Neck blocks always use PD depth 1.
    std::vector<std::int64_t> neck_channels = {};
    bool use_cpda = true;
    bool use_mcd = true;
    bool use_sppf = true;
    std::int64_t dfl_bins = 16;
    std::array<std::int64_t, 3> strides = {8, 16, 32};

    std::array<std::int64_t, 4> resolved_neck() const {
        if (!neck_channels.empty())
            return {neck_channels[0], neck_channels[1], neck_channels[2], neck_channels[3]};
        return {stage_channels[3], stage_channels[2], stage_channels[3], stage_channels[4]};
    }

    std::int64_t head_channels() const { return 4 * dfl_bins + num_classes; }

    void validate() const {
        if (input_h < 32 || input_w < 32 || input_h % 32 != 0 || input_w % 32 != 0)
            throw ValueError("config: input size " + std::to_string(input_h) + "x" +
                             std::to_string(input_w) + " must be a positive multiple of 32");
        if (num_classes < 1) throw ValueError("config: num_classes must be >= 1");
        if (dfl_bins < 2) throw ValueError("config: dfl_bins must be >= 2");
        if (stage_channels.size() != 5)
            throw ValueError("config: stage_channels needs 5 entries, got " +
                             std::to_string(stage_channels.size()));
        for (auto c : stage_channels)
            if (c < 4 || c % 4 != 0)
                throw ValueError("config: stage channel " + std::to_string(c) +
                                 " must be a positive multiple of 4");
        if (cpda_depths.size() != 4)
            throw ValueError("config: cpda_depths needs 4 entries, got " +
                             std::to_string(cpda_depths.size()));
        for (auto d : cpda_depths)
            if (d < 0) throw ValueError("config: cpda depth must be >= 0");
        if (!neck_channels.empty() && neck_channels.size() != 4)
            throw ValueError("config: neck_channels needs 4 entries when given");
        const auto neck = resolved_neck();
        for (auto c : neck)
            if (c < 4 || c % 4 != 0)
                throw ValueError("config: neck channel " + std::to_string(c) +
                                 " must be a positive multiple of 4");
        if (use_cpda) {
            auto check_cpda = [](std::int64_t co) {
                const std::int64_t h = co / 2;
                if (co % 2 != 0 || h % 4 != 0 || h % std::min<std::int64_t>(16, h) != 0)
                    throw ValueError("config: CPDA output width " + std::to_string(co) +
                                     " yields an illegal hidden width " + std::to_string(h) +
                                     " (needs h % 4 == 0 and h % min(16,h) == 0)");
            };
            for (std::size_t i = 1; i < 5; ++i) check_cpda(stage_channels[i]);
            for (auto c : neck) check_cpda(c);
        }
    }

    // Identity of the weight layout. Covers every shape-determining field
    // plus the mode; deliberately excludes input size, which weights do not
    // depend on. FNV-1a 64 over a canonical string.
    std::string fingerprint(Mode mode) const {
        std::ostringstream os;
        os << "v1;nc=" << num_classes << ";sc=";
        for (auto c : stage_channels) os << c << ",";
        os << ";depths=";
        for (auto d : cpda_depths) os << d << ",";
        os << ";neck=";
        for (auto c : resolved_neck()) os << c << ",";
        os << ";cpda=" << use_cpda << ";mcd=" << use_mcd << ";sppf=" << use_sppf
           << ";bins=" << dfl_bins << ";mode=" << mode_name(mode);
        const std::string s = os.str();
        std::uint64_t h = 14695981039346656037ull;
        for (const unsigned char ch : s) {
            h ^= ch;
            h *= 1099511628211ull;
        }
        std::ostringstream hex;
        hex << std::hex << std::setw(16) << std::setfill('0') << h;
        return hex.str();
    }
};

// Street-view road damage preset, 7 classes. Stage and neck widths were
// tuned against the 1.6M-parameter / 1.7-GFLOP deploy budget and are frozen.
inline ModelConfig preset_svrdd_n() {
    ModelConfig cfg;
    cfg.num_classes = 7;
    cfg.stage_channels = {16, 24, 32, 96, 384};
    cfg.cpda_depths = {1, 2, 2, 1};
    cfg.neck_channels = {32, 32, 64, 384};
    return cfg;
}

// Same network retargeted at the 80 COCO classes.
inline ModelConfig preset_coco_n() {
    ModelConfig cfg = preset_svrdd_n();
    cfg.num_classes = 80;
    return cfg;
}

inline ModelConfig preset_by_name(const std::string& name) {
    if (name == "svrdd-n") return preset_svrdd_n();
    if (name == "coco-n") return preset_coco_n();
    if (name == "plain") return ModelConfig{};
    throw ValueError("unknown preset '" + name + "' (expected svrdd-n, coco-n or plain)");
}

template <typename T>
struct Model {
    ModelConfig cfg;
    Mode mode = Mode::Train;

    ConvBlock<T> stem;
    std::array<DownBlock<T>, 4> downs;
    std::array<StageBlock<T>, 4> stages;
    std::optional<SppfBlock<T>> sppf;
    StageBlock<T> neck_t4, neck_p3, neck_p4, neck_p5;
    DownBlock<T> neck_d3, neck_d4;
    std::array<Conv2dLayer<T>, 3> head_reg, head_cls;

    static Model build(const ModelConfig& cfg, Mode mode) {
        cfg.validate();
        Model m;
        m.cfg = cfg;
        m.mode = mode;
        const auto& c = cfg.stage_channels;
        m.stem = ConvBlock<T>::make(3, c[0], 3, 2, mode);
        for (int i = 0; i < 4; ++i) {
            m.downs[i] = DownBlock<T>::make(c[i], c[i + 1], cfg.use_mcd, mode);
            m.stages[i] =
                StageBlock<T>::make(c[i + 1], c[i + 1], cfg.cpda_depths[i], cfg.use_cpda, mode);
        }
        if (cfg.use_sppf) m.sppf = SppfBlock<T>::make(c[4], mode);
        const auto [t4w, p3w, p4w, p5w] = cfg.resolved_neck();
        m.neck_t4 = StageBlock<T>::make(c[4] + c[3], t4w, 1, cfg.use_cpda, mode);
        m.neck_p3 = StageBlock<T>::make(t4w + c[2], p3w, 1, cfg.use_cpda, mode);
        m.neck_d3 = DownBlock<T>::make(p3w, p3w, cfg.use_mcd, mode);
        m.neck_p4 = StageBlock<T>::make(p3w + t4w, p4w, 1, cfg.use_cpda, mode);
        m.neck_d4 = DownBlock<T>::make(p4w, p4w, cfg.use_mcd, mode);
        m.neck_p5 = StageBlock<T>::make(p4w + c[4], p5w, 1, cfg.use_cpda, mode);
        const std::array<std::int64_t, 3> widths = {p3w, p4w, p5w};
        for (int i = 0; i < 3; ++i) {
            m.head_reg[i] = Conv2dLayer<T>::make(widths[i], 4 * cfg.dfl_bins, 1, 1, 0, true);
            m.head_cls[i] = Conv2dLayer<T>::make(widths[i], cfg.num_classes, 1, 1, 0, true);
        }
        return m;
    }

    // Draw order matches visit() order exactly.
    void init(Rng& rng) {
        stem.init(rng);
        for (int i = 0; i < 4; ++i) {
            downs[i].init(rng);
            stages[i].init(rng);
        }
        if (sppf) sppf->init(rng);
        neck_t4.init(rng);
        neck_p3.init(rng);
        neck_d3.init(rng);
        neck_p4.init(rng);
        neck_d4.init(rng);
        neck_p5.init(rng);
        for (int i = 0; i < 3; ++i) {
            head_reg[i].init(rng);
            head_cls[i].init(rng);
        }
    }

    template <typename F>
    void visit(F&& f) {
        stem.visit("backbone.stem", f);
        for (int i = 0; i < 4; ++i) {
            const std::string n = std::to_string(i + 1);
            downs[i].visit("backbone.down" + n, f);
            stages[i].visit("backbone.stage" + n, f);
        }
        if (sppf) sppf->visit("backbone.sppf", f);
        neck_t4.visit("neck.t4", f);
        neck_p3.visit("neck.p3", f);
        neck_d3.visit("neck.down3", f);
        neck_p4.visit("neck.p4", f);
        neck_d4.visit("neck.down4", f);
        neck_p5.visit("neck.p5", f);
        const char* names[3] = {"head.p3", "head.p4", "head.p5"};
        for (int i = 0; i < 3; ++i) {
            head_reg[i].visit(std::string(names[i]) + ".reg", f);
            head_cls[i].visit(std::string(names[i]) + ".cls", f);
        }
    }

    // Raw head maps at strides 8/16/32, channels 4*dfl_bins + num_classes
    // (reg block first, then class logits).
    std::array<Tensor<T>, 3> forward(const Tensor<T>& x) const {
        if (x.rank() != 4 || x.extent(1) != 3)
            throw ShapeError("model: input must be [N,3,H,W], got " + shape_str(x.shape()));
        if (x.extent(2) != cfg.input_h || x.extent(3) != cfg.input_w)
            throw ShapeError("model: input " + std::to_string(x.extent(2)) + "x" +
                             std::to_string(x.extent(3)) + " does not match configured " +
                             std::to_string(cfg.input_h) + "x" + std::to_string(cfg.input_w));
        const Tensor<T> x0 = stem.forward(x);
        const Tensor<T> x1 = stages[0].forward(downs[0].forward(x0));
        const Tensor<T> x2 = stages[1].forward(downs[1].forward(x1));  // P3 feature
        const Tensor<T> x3 = stages[2].forward(downs[2].forward(x2));  // P4 feature
        Tensor<T> x4 = stages[3].forward(downs[3].forward(x3));
        if (sppf) x4 = sppf->forward(x4);  // P5 feature

        const Tensor<T> t4 = neck_t4.forward(concat(upsample_nearest2x(x4), x3, 1));
        const Tensor<T> p3 = neck_p3.forward(concat(upsample_nearest2x(t4), x2, 1));
        const Tensor<T> p4 = neck_p4.forward(concat(neck_d3.forward(p3), t4, 1));
        const Tensor<T> p5 = neck_p5.forward(concat(neck_d4.forward(p4), x4, 1));

        const std::array<const Tensor<T>*, 3> feats = {&p3, &p4, &p5};
        std::array<Tensor<T>, 3> heads;
        for (int i = 0; i < 3; ++i)
            heads[i] = concat(head_reg[i].forward(*feats[i]), head_cls[i].forward(*feats[i]), 1);
        return heads;
    }

    // Deploy form: every BatchNorm folded into its conv, every DOConv folded
    // into a single kernel. Forward outputs are preserved up to roundoff.
    Model fold() const {
        if (mode == Mode::Deploy) throw ValueError("model: already in deploy form");
        Model m;
        m.cfg = cfg;
        m.mode = Mode::Deploy;
        m.stem = fold_bn(stem);
        for (int i = 0; i < 4; ++i) {
            m.downs[i] = downs[i].fold();
            m.stages[i] = stages[i].fold();
        }
        if (sppf) m.sppf = sppf->fold();
        m.neck_t4 = neck_t4.fold();
        m.neck_p3 = neck_p3.fold();
        m.neck_d3 = neck_d3.fold();
        m.neck_p4 = neck_p4.fold();
        m.neck_d4 = neck_d4.fold();
        m.neck_p5 = neck_p5.fold();
        m.head_reg = head_reg;
        m.head_cls = head_cls;
        return m;
    }

    std::int64_t param_count() {
        std::int64_t n = 0;
        visit([&n](const std::string&, Tensor<T>& t, bool buffer) {
            if (!buffer) n += t.size();
        });
        return n;
    }

    WeightStore export_store(std::uint64_t seed) {
        WeightStore ws;
        ws.fingerprint = cfg.fingerprint(mode);
        ws.seed = seed;
        visit([&ws](const std::string& name, Tensor<T>& t, bool buffer) {
            StoredTensor st;
            st.name = name;
            st.shape = t.shape();
            st.buffer = buffer;
            st.data.resize(static_cast<std::size_t>(t.size()));
            for (std::int64_t i = 0; i < t.size(); ++i) st.data[i] = static_cast<float>(t[i]);
            ws.tensors.push_back(std::move(st));
        });
        return ws;
    }

    void import_store(const WeightStore& ws, bool check_fingerprint = true) {
        if (check_fingerprint && ws.fingerprint != cfg.fingerprint(mode))
            throw FingerprintError("weights carry fingerprint " + ws.fingerprint +
                                   " but the configuration requires " + cfg.fingerprint(mode));
        std::size_t idx = 0;
        visit([&](const std::string& name, Tensor<T>& t, bool) {
            if (idx >= ws.tensors.size())
                throw FormatError("weight store ends early, missing tensor " + name);
            const StoredTensor& st = ws.tensors[idx++];
            if (st.name != name)
                throw FormatError("weight store order mismatch: expected " + name + ", found " +
                                  st.name);
            if (st.shape != t.shape())
                throw ShapeError("tensor " + name + " has shape " + shape_str(st.shape) +
                                 " in the store but " + shape_str(t.shape()) + " in the model");
            for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(st.data[i]);
        });
        if (idx != ws.tensors.size())
            throw FormatError("weight store carries " + std::to_string(ws.tensors.size() - idx) +
                              " unexpected extra tensors");
    }
};

// Canonical construction path: initialize in train form from the seed, then
// fold when the deploy form is requested. Deploy weights are therefore
// always the fold of the train weights for the same seed.
template <typename T>
Model<T> build_model(const ModelConfig& cfg, Mode mode, std::uint64_t seed) {
    Model<T> m = Model<T>::build(cfg, Mode::Train);
    Rng rng(seed);
    m.init(rng);
    if (mode == Mode::Deploy) return m.fold();
    return m;
}

// ---------------------------------------------------------------------------
// Parameter and FLOP accounting.
//
// Conventions (documented in the README):
//   - params = learnable elements only; BatchNorm running stats are buffers
//   - FLOPs = 2 * MACs at batch 1 and the configured input size
//   - MACs counted for conv (bias-free), matmul, normalization (BN 1/elem in
//     train form, 0 when folded; GN and LN 2/elem), pooling (k^2 per output
//     element, strip pooling 1 per input element)
//   - activations, sigmoid gates, residual adds, upsampling, concat: 0

struct SummaryRow {
    std::string name;
    std::string type;
    std::int64_t out_c = 0, out_h = 0, out_w = 0;
    std::int64_t params = 0;
    std::int64_t flops = 0;
};

struct SummaryReport {
    Mode mode = Mode::Deploy;
    std::vector<SummaryRow> rows;
    std::int64_t total_params = 0;
    std::int64_t total_flops = 0;
};

namespace detail {

struct Cost {
    std::int64_t p = 0, m = 0;
    Cost& operator+=(const Cost& o) {
        p += o.p;
        m += o.m;
        return *this;
    }
};

inline Cost cb_cost(std::int64_t ci, std::int64_t co, std::int64_t k, std::int64_t ho,
                    std::int64_t wo, Mode mode) {
    Cost c;
    c.p = co * ci * k * k + (mode == Mode::Deploy ? co : 2 * co);
    c.m = co * ci * k * k * ho * wo + (mode == Mode::Deploy ? 0 : co * ho * wo);
    return c;
}

inline Cost plain_conv_cost(std::int64_t ci, std::int64_t co, std::int64_t k, std::int64_t ho,
                            std::int64_t wo) {
    return {co * ci * k * k + co, co * ci * k * k * ho * wo};
}

inline Cost doconv_cost(std::int64_t ci, std::int64_t co, std::int64_t k, std::int64_t dmul,
                        std::int64_t ho, std::int64_t wo, Mode mode) {
    Cost c;
    c.p = do_param_count(ci, co, k, k, dmul, mode);
    // deploy: one folded conv; train: depthwise stage + conventional stage
    c.m = (mode == Mode::Deploy) ? co * ci * k * k * ho * wo
                                 : (ci * dmul * k * k + co * ci * dmul) * ho * wo;
    return c;
}

inline Cost glca_cost(std::int64_t c, std::int64_t h, std::int64_t w) {
    const std::int64_t r = 4;
    Cost g;
    // ELA: two depthwise k=7 1-D convs, shared GroupNorm affine
    g.p += 7 * c * 2 + 2 * c;
    g.m += 2 * c * h * w;      // strip pooling, one MAC per input element per axis
    g.m += 7 * c * (h + w);    // the 1-D convs
    g.m += 2 * c * (h + w);    // GroupNorm over both strips
    // GC: key conv, context matmul, CLR transform, expand conv
    g.p += (c + 1) + (c * (c / r) + c / r) + 2 * (c / r) + ((c / r) * c + c);
    g.m += c * h * w;          // key conv
    g.m += c * h * w;          // context matmul [C,HW] x [HW,1]
    g.m += c * (c / r) + 2 * (c / r) + (c / r) * c;
    return g;
}

inline Cost pd_cost(std::int64_t c, std::int64_t ho, std::int64_t wo, Mode mode) {
    return doconv_cost(c / 4, c / 4, 3, 9, ho, wo, mode);
}

inline Cost cpda_cost(std::int64_t ci, std::int64_t co, std::int64_t n, std::int64_t ho,
                      std::int64_t wo, Mode mode) {
    const std::int64_t h = co / 2;
    Cost c = cb_cost(ci, 2 * h, 1, ho, wo, mode);
    for (std::int64_t i = 0; i < n; ++i) c += pd_cost(h, ho, wo, mode);
    c += glca_cost(h, ho, wo);
    c += cb_cost((2 + n) * h, co, 1, ho, wo, mode);
    return c;
}

inline Cost c2f_cost(std::int64_t ci, std::int64_t co, std::int64_t n, std::int64_t ho,
                     std::int64_t wo, Mode mode) {
    const std::int64_t h = co / 2;
    Cost c = cb_cost(ci, 2 * h, 1, ho, wo, mode);
    for (std::int64_t i = 0; i < n; ++i) {
        c += cb_cost(h, h, 3, ho, wo, mode);
        c += cb_cost(h, h, 3, ho, wo, mode);
    }
    c += cb_cost((2 + n) * h, co, 1, ho, wo, mode);
    return c;
}

inline Cost mcd_cost(std::int64_t ci, std::int64_t co, std::int64_t ho, std::int64_t wo,
                     Mode mode) {
    Cost c = cb_cost(ci, co / 2, 3, ho, wo, mode);
    for (int path = 0; path < 2; ++path) {
        c.m += 4 * ci * ho * wo;  // 2x2 pool
        c += cb_cost(ci, co / 4, 1, ho, wo, mode);
    }
    return c;
}

inline Cost sppf_cost(std::int64_t c, std::int64_t ho, std::int64_t wo, Mode mode) {
    Cost s = cb_cost(c, c / 2, 1, ho, wo, mode);
    s.m += 3 * 25 * (c / 2) * ho * wo;  // three chained k=5 maxpools
    s += cb_cost(2 * c, c, 1, ho, wo, mode);
    return s;
}

}  // namespace detail

inline SummaryReport summarize(const ModelConfig& cfg, Mode mode) {
    cfg.validate();
    SummaryReport rep;
    rep.mode = mode;
    const auto& c = cfg.stage_channels;
    const std::int64_t H = cfg.input_h, W = cfg.input_w;

    auto row = [&rep](const std::string& name, const std::string& type, std::int64_t oc,
                      std::int64_t oh, std::int64_t ow, detail::Cost cost) {
        rep.rows.push_back({name, type, oc, oh, ow, cost.p, 2 * cost.m});
        rep.total_params += cost.p;
        rep.total_flops += 2 * cost.m;
    };
    auto down_cost = [&](std::int64_t ci, std::int64_t co, std::int64_t ho, std::int64_t wo) {
        return cfg.use_mcd ? detail::mcd_cost(ci, co, ho, wo, mode)
                           : detail::cb_cost(ci, co, 3, ho, wo, mode);
    };
    auto stage_cost = [&](std::int64_t ci, std::int64_t co, std::int64_t n, std::int64_t ho,
                          std::int64_t wo) {
        return cfg.use_cpda ? detail::cpda_cost(ci, co, n, ho, wo, mode)
                            : detail::c2f_cost(ci, co, n, ho, wo, mode);
    };
    const char* down_type = cfg.use_mcd ? "MCD" : "CB";
    const char* stage_type = cfg.use_cpda ? "CPDA" : "C2f";

    row("backbone.stem", "CB", c[0], H / 2, W / 2, detail::cb_cost(3, c[0], 3, H / 2, W / 2, mode));
    for (int i = 0; i < 4; ++i) {
        const std::int64_t d = 4ll << i;  // output downscale factor of this pair
        const std::string n = std::to_string(i + 1);
        row("backbone.down" + n, down_type, c[i + 1], H / d, W / d,
            down_cost(c[i], c[i + 1], H / d, W / d));
        row("backbone.stage" + n, stage_type, c[i + 1], H / d, W / d,
            stage_cost(c[i + 1], c[i + 1], cfg.cpda_depths[i], H / d, W / d));
    }
    if (cfg.use_sppf)
        row("backbone.sppf", "SPPF", c[4], H / 32, W / 32,
            detail::sppf_cost(c[4], H / 32, W / 32, mode));

    const auto [t4w, p3w, p4w, p5w] = cfg.resolved_neck();
    row("neck.t4", stage_type, t4w, H / 16, W / 16,
        stage_cost(c[4] + c[3], t4w, 1, H / 16, W / 16));
    row("neck.p3", stage_type, p3w, H / 8, W / 8, stage_cost(t4w + c[2], p3w, 1, H / 8, W / 8));
    row("neck.down3", down_type, p3w, H / 16, W / 16, down_cost(p3w, p3w, H / 16, W / 16));
    row("neck.p4", stage_type, p4w, H / 16, W / 16,
        stage_cost(p3w + t4w, p4w, 1, H / 16, W / 16));
    row("neck.down4", down_type, p4w, H / 32, W / 32, down_cost(p4w, p4w, H / 32, W / 32));
    row("neck.p5", stage_type, p5w, H / 32, W / 32,
        stage_cost(p4w + c[4], p5w, 1, H / 32, W / 32));

    const std::array<std::int64_t, 3> widths = {p3w, p4w, p5w};
    const char* names[3] = {"head.p3", "head.p4", "head.p5"};
    for (int i = 0; i < 3; ++i) {
        const std::int64_t s = cfg.strides[static_cast<std::size_t>(i)];
        row(std::string(names[i]) + ".reg", "Conv", 4 * cfg.dfl_bins, H / s, W / s,
            detail::plain_conv_cost(widths[i], 4 * cfg.dfl_bins, 1, H / s, W / s));
        row(std::string(names[i]) + ".cls", "Conv", cfg.num_classes, H / s, W / s,
            detail::plain_conv_cost(widths[i], cfg.num_classes, 1, H / s, W / s));
    }
    return rep;
}

}  // namespace daponet
