#pragma once

// Verification suite: independent naive references (namespace daponet::ref)
// and the named property checks behind `daponet check`. Every check returns
// a CheckResult carrying the worst measured error, so the JSON report shows
// how much margin a pass had.

#include <functional>

#include "grad.hpp"
#include "image.hpp"

namespace daponet {
namespace ref {

// Plain six-loop convolution, the oracle for the production conv2d.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, std::type_identity_t<const Tensor<T>*> bias, Int2 stride,
                 Int2 pad) {
    const std::int64_t nb = x.extent(0), ci = x.extent(1), h = x.extent(2), wd = x.extent(3);
    const std::int64_t co = w.extent(0), kh = w.extent(2), kw = w.extent(3);
    const std::int64_t ho = conv_out_extent(h, kh, stride.h, pad.h);
    const std::int64_t wo = conv_out_extent(wd, kw, stride.w, pad.w);
    Tensor<T> y({nb, co, ho, wo});
    for (std::int64_t n = 0; n < nb; ++n)
        for (std::int64_t o = 0; o < co; ++o)
            for (std::int64_t oy = 0; oy < ho; ++oy)
                for (std::int64_t ox = 0; ox < wo; ++ox) {
                    T acc = bias ? (*bias)[o] : T(0);
                    for (std::int64_t c = 0; c < ci; ++c)
                        for (std::int64_t ky = 0; ky < kh; ++ky)
                            for (std::int64_t kx = 0; kx < kw; ++kx) {
                                const std::int64_t iy = oy * stride.h - pad.h + ky;
                                const std::int64_t ix = ox * stride.w - pad.w + kx;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                                acc += x.at(n, c, iy, ix) * w.at(o, c, ky, kx);
                            }
                    y.at(n, o, oy, ox) = acc;
                }
    return y;
}

template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& w, std::type_identity_t<const Tensor<T>*> bias,
                 std::int64_t groups, std::int64_t pad) {
    const std::int64_t nb = x.extent(0), ci = x.extent(1), len = x.extent(2);
    const std::int64_t co = w.extent(0), cig = w.extent(1), k = w.extent(2);
    const std::int64_t lo = len + 2 * pad - k + 1;
    const std::int64_t cog = co / groups;
    Tensor<T> y({nb, co, lo});
    for (std::int64_t n = 0; n < nb; ++n)
        for (std::int64_t o = 0; o < co; ++o) {
            const std::int64_t g = o / cog;
            for (std::int64_t p = 0; p < lo; ++p) {
                T acc = bias ? (*bias)[o] : T(0);
                for (std::int64_t c = 0; c < cig; ++c)
                    for (std::int64_t j = 0; j < k; ++j) {
                        const std::int64_t ip = p - pad + j;
                        if (ip < 0 || ip >= len) continue;
                        acc += x.at(n, g * cig + c, ip) * w.at(o, c, j);
                    }
                y.at(n, o, p) = acc;
            }
        }
    return y;
}

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x, std::int64_t k, std::int64_t stride, std::int64_t pad) {
    const std::int64_t nb = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
    const std::int64_t ho = conv_out_extent(h, k, stride, pad);
    const std::int64_t wo = conv_out_extent(w, k, stride, pad);
    Tensor<T> y({nb, c, ho, wo});
    for (std::int64_t n = 0; n < nb; ++n)
        for (std::int64_t ch = 0; ch < c; ++ch)
            for (std::int64_t oy = 0; oy < ho; ++oy)
                for (std::int64_t ox = 0; ox < wo; ++ox) {
                    T best = -std::numeric_limits<T>::infinity();
                    for (std::int64_t ky = 0; ky < k; ++ky)
                        for (std::int64_t kx = 0; kx < k; ++kx) {
                            const std::int64_t iy = oy * stride - pad + ky;
                            const std::int64_t ix = ox * stride - pad + kx;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                            best = std::max(best, x.at(n, ch, iy, ix));
                        }
                    y.at(n, ch, oy, ox) = best;
                }
    return y;
}

template <typename T>
Tensor<T> avgpool2d(const Tensor<T>& x, std::int64_t k, std::int64_t stride, std::int64_t pad) {
    const std::int64_t nb = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
    const std::int64_t ho = conv_out_extent(h, k, stride, pad);
    const std::int64_t wo = conv_out_extent(w, k, stride, pad);
    Tensor<T> y({nb, c, ho, wo});
    for (std::int64_t n = 0; n < nb; ++n)
        for (std::int64_t ch = 0; ch < c; ++ch)
            for (std::int64_t oy = 0; oy < ho; ++oy)
                for (std::int64_t ox = 0; ox < wo; ++ox) {
                    T acc = T(0);
                    for (std::int64_t ky = 0; ky < k; ++ky)
                        for (std::int64_t kx = 0; kx < k; ++kx) {
                            const std::int64_t iy = oy * stride - pad + ky;
                            const std::int64_t ix = ox * stride - pad + kx;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                            acc += x.at(n, ch, iy, ix);
                        }
                    y.at(n, ch, oy, ox) = acc / static_cast<T>(k * k);
                }
    return y;
}

// Quadratic NMS written the blunt way: repeatedly take the highest-scoring
// remaining detection (lowest index on ties) and erase everything of the
// same class it overlaps.
inline std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_thr) {
    std::vector<char> alive(dets.size(), 1);
    std::vector<Detection> out;
    for (;;) {
        std::size_t best = dets.size();
        for (std::size_t i = 0; i < dets.size(); ++i)
            if (alive[i] && (best == dets.size() || dets[i].score > dets[best].score)) best = i;
        if (best == dets.size()) break;
        alive[best] = 0;
        out.push_back(dets[best]);
        for (std::size_t i = 0; i < dets.size(); ++i)
            if (alive[i] && dets[i].class_id == dets[best].class_id &&
                iou(dets[i].box, dets[best].box) > iou_thr)
                alive[i] = 0;
    }
    return out;
}

// Brute-force matcher: enumerates every injective detection-to-GT assignment
// whose pairs clear the IoU threshold, then filters by the evaluation rule
// (detections in score order, each taking the unmatched GT of highest IoU
// when that IoU reaches t). Exactly one assignment must survive; its TP
// flags are returned. `dets` must already be sorted by descending score.
inline bool exhaustive_match(const std::vector<Box>& dets, const std::vector<Box>& gts, double t,
                             std::vector<char>& tp_out) {
    const std::size_t nd = dets.size(), ng = gts.size();
    std::vector<int> assign(nd, -1);
    std::vector<char> used(ng, 0);
    std::vector<std::vector<int>> survivors;
    std::function<void(std::size_t)> walk = [&](std::size_t d) {
        if (d == nd) {
            survivors.push_back(assign);
            return;
        }
        assign[d] = -1;
        walk(d + 1);
        for (std::size_t g = 0; g < ng; ++g) {
            if (used[g] || iou(dets[d], gts[g]) < t) continue;
            used[g] = 1;
            assign[d] = static_cast<int>(g);
            walk(d + 1);
            assign[d] = -1;
            used[g] = 0;
        }
    };
    walk(0);

    std::vector<std::vector<int>> valid;
    for (const auto& a : survivors) {
        std::vector<char> taken(ng, 0);
        bool ok = true;
        for (std::size_t d = 0; d < nd && ok; ++d) {
            double best = 0;
            int best_g = -1;
            for (std::size_t g = 0; g < ng; ++g) {
                if (taken[g]) continue;
                const double v = iou(dets[d], gts[g]);
                if (v > best) {
                    best = v;
                    best_g = static_cast<int>(g);
                }
            }
            const int want = (best_g >= 0 && best >= t) ? best_g : -1;
            if (a[d] != want) ok = false;
            if (want >= 0) taken[static_cast<std::size_t>(want)] = 1;
        }
        if (ok) valid.push_back(a);
    }
    if (valid.size() != 1) return false;
    tp_out.assign(nd, 0);
    for (std::size_t d = 0; d < nd; ++d) tp_out[d] = valid[0][d] >= 0;
    return true;
}

}  // namespace ref

namespace checks {

struct CheckResult {
    std::string name;
    bool pass = false;
    double measured = 0;
    double tolerance = 0;
    std::string detail;
};

namespace detail {

template <typename T>
double max_rel_err(const Tensor<T>& a, const Tensor<T>& b) {
    double worst = 0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        const double av = static_cast<double>(a[i]), bv = static_cast<double>(b[i]);
        worst = std::max(worst, std::abs(av - bv) / (std::abs(av) + std::abs(bv) + 1e-12));
    }
    return worst;
}

// Error relative to the output scale. Per-element relative error is the
// wrong yardstick for fold equivalence: where a sum of hundreds of products
// cancels to near zero, no finite-precision reassociation can hold a
// pointwise ratio, while the scaled error stays at rounding level.
template <typename T>
double max_scaled_err(const Tensor<T>& a, const Tensor<T>& b) {
    double scale = 0, worst = 0;
    for (std::int64_t i = 0; i < b.size(); ++i)
        scale = std::max(scale, std::abs(static_cast<double>(b[i])));
    for (std::int64_t i = 0; i < a.size(); ++i)
        worst = std::max(worst,
                         std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return worst / std::max(scale, 1e-12);
}

template <typename T>
double max_abs_err(const Tensor<T>& a, const Tensor<T>& b) {
    double worst = 0;
    for (std::int64_t i = 0; i < a.size(); ++i)
        worst = std::max(worst,
                         std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return worst;
}

template <typename T>
double doconv_fold_worst(std::uint64_t seed, int cases) {
    Rng rng(seed);
    double worst = 0;
    for (int i = 0; i < cases; ++i) {
        const std::int64_t ci = rng.uniform_int(1, 8), co = rng.uniform_int(1, 8);
        const std::int64_t k = rng.uniform_int(0, 1) ? 3 : 1;
        const std::int64_t dmul = k * k + (rng.uniform_int(0, 1) ? 3 : 0);
        const std::int64_t h = rng.uniform_int(k, 8), w = rng.uniform_int(k, 8);
        const std::int64_t stride = rng.uniform_int(1, 2);
        DoConv<T> dc = DoConv<T>::make(ci, co, k, k, stride, k / 2, Mode::Train, dmul);
        dc.init(rng);
        for (std::int64_t j = 0; j < dc.D.size(); ++j)
            dc.D[j] = static_cast<T>(rng.uniform(-1.0, 1.0));
        const Tensor<T> x = rng.uniform_tensor<T>({1, ci, h, w}, T(-1), T(1));
        const Tensor<T> y_factored = dc.forward(x);
        const Tensor<T> y_folded = dc.to_deploy().forward(x);
        worst = std::max(worst, max_scaled_err(y_factored, y_folded));
    }
    return worst;
}

inline std::vector<Detection> random_dets(Rng& rng, int n, int classes) {
    std::vector<Detection> dets;
    for (int i = 0; i < n; ++i) {
        Box b;
        b.x1 = rng.uniform(0.0, 80.0);
        b.y1 = rng.uniform(0.0, 80.0);
        b.x2 = b.x1 + rng.uniform(5.0, 40.0);
        b.y2 = b.y1 + rng.uniform(5.0, 40.0);
        dets.push_back({b, static_cast<int>(rng.uniform_int(0, classes - 1)),
                        rng.uniform(0.05, 1.0)});
    }
    return dets;
}

}  // namespace detail

inline CheckResult doconv_fold_f32(std::uint64_t seed, int cases = 120) {
    CheckResult r{"doconv_fold_f32", false, 0, 1e-5, ""};
    r.measured = detail::doconv_fold_worst<float>(seed, cases);
    r.pass = r.measured <= r.tolerance;
    r.detail = std::to_string(cases) + " random factored-vs-folded cases";
    return r;
}

inline CheckResult doconv_fold_f64(std::uint64_t seed, int cases = 120) {
    CheckResult r{"doconv_fold_f64", false, 0, 1e-10, ""};
    r.measured = detail::doconv_fold_worst<double>(seed, cases);
    r.pass = r.measured <= r.tolerance;
    r.detail = std::to_string(cases) + " random factored-vs-folded cases";
    return r;
}

inline CheckResult bn_fold(std::uint64_t seed, int cases = 120) {
    CheckResult r{"bn_fold", false, 0, 1e-5, ""};
    Rng rng(seed);
    double worst = 0;
    for (int i = 0; i < cases; ++i) {
        const std::int64_t ci = rng.uniform_int(1, 8), co = rng.uniform_int(1, 8);
        const std::int64_t k = rng.uniform_int(0, 1) ? 3 : 1;
        const std::int64_t stride = rng.uniform_int(1, 2);
        const std::int64_t h = rng.uniform_int(k, 8), w = rng.uniform_int(k, 8);
        ConvBlock<float> cb = ConvBlock<float>::make(ci, co, k, stride, Mode::Train);
        cb.init(rng);
        BatchNorm<float>& bn = *cb.bn;
        for (std::int64_t o = 0; o < co; ++o) {
            bn.gamma[o] = static_cast<float>(rng.uniform(0.5, 1.5));
            bn.beta[o] = static_cast<float>(rng.uniform(-0.5, 0.5));
            bn.running_mean[o] = static_cast<float>(rng.uniform(-1.0, 1.0));
            bn.running_var[o] = static_cast<float>(rng.uniform(0.5, 2.0));
        }
        const Tensor<float> x = rng.uniform_tensor<float>({1, ci, h, w}, -1.0f, 1.0f);
        worst = std::max(worst, detail::max_abs_err(cb.forward(x), fold_bn(cb).forward(x)));
    }
    r.measured = worst;
    r.pass = r.measured <= r.tolerance;
    r.detail = std::to_string(cases) + " random pre/post-fold blocks";
    return r;
}

inline CheckResult gradient(GradOp op, std::uint64_t seed) {
    CheckResult r{std::string("grad_") + grad_op_name(op), false, 0, 1e-5, ""};
    Rng rng(seed);
    r.measured = grad_check(op, rng);
    r.pass = r.measured <= r.tolerance;
    r.detail = "finite-difference comparison, central step 1e-5";
    return r;
}

inline CheckResult conv_pool_oracles(std::uint64_t seed, int cases = 60) {
    CheckResult r{"conv_pool_oracles", false, 0, 1e-6, ""};
    Rng rng(seed);
    double worst = 0;
    for (int i = 0; i < cases; ++i) {
        const std::int64_t ci = rng.uniform_int(1, 6), co = rng.uniform_int(1, 6);
        const std::int64_t k = rng.uniform_int(0, 1) ? 3 : 1;
        const Int2 stride{rng.uniform_int(1, 2), rng.uniform_int(1, 2)};
        const Int2 pad{rng.uniform_int(0, k / 2), rng.uniform_int(0, k / 2)};
        const std::int64_t h = rng.uniform_int(k, 8), w = rng.uniform_int(k, 8);
        const Tensor<float> x = rng.uniform_tensor<float>({2, ci, h, w}, -1.0f, 1.0f);
        const Tensor<float> wt = rng.uniform_tensor<float>({co, ci, k, k}, -1.0f, 1.0f);
        const Tensor<float> bias = rng.uniform_tensor<float>({co}, -1.0f, 1.0f);
        worst = std::max(worst, detail::max_rel_err(conv2d(x, wt, &bias, stride, pad),
                                                    ref::conv2d(x, wt, &bias, stride, pad)));

        const std::int64_t groups = rng.uniform_int(0, 1) ? ci : 1;
        const std::int64_t len = rng.uniform_int(3, 10);
        const Tensor<float> x1 = rng.uniform_tensor<float>({2, ci, len}, -1.0f, 1.0f);
        const Tensor<float> w1 = rng.uniform_tensor<float>({ci, ci / groups, 3}, -1.0f, 1.0f);
        worst = std::max(worst, detail::max_rel_err(conv1d(x1, w1, nullptr, groups, 1),
                                                    ref::conv1d(x1, w1, nullptr, groups, 1)));

        const std::int64_t pk = rng.uniform_int(2, 3), ps = rng.uniform_int(1, 2);
        const std::int64_t pp = rng.uniform_int(0, pk / 2);
        const std::int64_t ph = rng.uniform_int(pk, 8), pw = rng.uniform_int(pk, 8);
        const Tensor<float> xp = rng.uniform_tensor<float>({1, 3, ph, pw}, -1.0f, 1.0f);
        worst = std::max(worst, detail::max_abs_err(maxpool2d(xp, pk, ps, pp),
                                                    ref::maxpool2d(xp, pk, ps, pp)));
        worst = std::max(worst, detail::max_rel_err(avgpool2d(xp, pk, ps, pp),
                                                    ref::avgpool2d(xp, pk, ps, pp)));
    }
    r.measured = worst;
    r.pass = r.measured <= r.tolerance;
    r.detail = std::to_string(cases) + " random conv2d/conv1d/pool cases vs naive loops";
    return r;
}

// Fresh (make-state) ELA: 1-D conv weights are zero and GroupNorm is the
// identity, so both gates are exactly sigmoid(0) = 0.5 and the block must
// return 0.25 * x for any constant input.
inline CheckResult ela_constant_trace(std::uint64_t) {
    CheckResult r{"ela_constant_trace", false, 0, 1e-6, ""};
    double worst = 0;
    for (const double v : {0.7, -1.3, 42.0}) {
        const Ela<double> ela = Ela<double>::make(8);
        const Tensor<double> x = Tensor<double>::full({2, 8, 5, 6}, v);
        const Tensor<double> y = ela.forward(x);
        for (std::int64_t i = 0; i < y.size(); ++i)
            worst = std::max(worst, std::abs(y[i] - 0.25 * x[i]) / (std::abs(0.25 * x[i]) + 1e-12));
    }
    r.measured = worst;
    r.pass = r.measured <= r.tolerance;
    r.detail = "default-initialized ELA on constant inputs vs 0.25*x";
    return r;
}

inline CheckResult gc_zero_identity(std::uint64_t seed) {
    CheckResult r{"gc_zero_identity", false, 0, 0, ""};
    Rng rng(seed);
    Gc<double> gc = Gc<double>::make(8);
    gc.init(rng);  // key and t1 randomized, t2 stays zero
    const Tensor<double> x = rng.uniform_tensor<double>({2, 8, 4, 5}, -2.0, 2.0);
    const Tensor<double> y = gc.forward(x);
    std::int64_t mismatches = 0;
    for (std::int64_t i = 0; i < x.size(); ++i)
        if (x[i] != y[i]) ++mismatches;
    r.measured = static_cast<double>(mismatches);
    r.pass = mismatches == 0;
    r.detail = "zero final transform must be a bitwise identity";
    return r;
}

inline CheckResult gc_softmax_sum(std::uint64_t seed, int cases = 50) {
    CheckResult r{"gc_softmax_sum", false, 0, 1e-6, ""};
    Rng rng(seed);
    double worst = 0;
    for (int i = 0; i < cases; ++i) {
        const std::int64_t c = 4 * rng.uniform_int(1, 4);
        const std::int64_t h = rng.uniform_int(1, 7), w = rng.uniform_int(1, 7);
        Gc<float> gc = Gc<float>::make(c);
        gc.init(rng);
        const Tensor<float> x = rng.uniform_tensor<float>({2, c, h, w}, -3.0f, 3.0f);
        const Tensor<float> alpha = gc.attention(x);
        for (std::int64_t n = 0; n < 2; ++n) {
            double sum = 0;
            for (std::int64_t p = 0; p < h * w; ++p)
                sum += static_cast<double>(alpha.at(n, p));
            worst = std::max(worst, std::abs(sum - 1.0));
        }
    }
    r.measured = worst;
    r.pass = r.measured <= r.tolerance;
    r.detail = std::to_string(cases) + " random attention maps, per-item sums vs 1";
    return r;
}

inline CheckResult pd_partial_identity(std::uint64_t seed) {
    CheckResult r{"pd_partial_identity", false, 0, 0, ""};
    Rng rng(seed);
    PdBlock<float> pd = PdBlock<float>::make(8, Mode::Train);
    pd.init(rng);
    const Tensor<float> x = rng.uniform_tensor<float>({2, 8, 4, 5}, -2.0f, 2.0f);
    const Tensor<float> y = pd.forward(x);
    std::int64_t mismatches = 0;
    for (std::int64_t n = 0; n < 2; ++n)
        for (std::int64_t c = 2; c < 8; ++c)
            for (std::int64_t i = 0; i < 4; ++i)
                for (std::int64_t j = 0; j < 5; ++j)
                    if (x.at(n, c, i, j) != y.at(n, c, i, j)) ++mismatches;
    r.measured = static_cast<double>(mismatches);
    r.pass = mismatches == 0;
    r.detail = "bypass 3C/4 channels must be bit-identical";
    return r;
}

inline CheckResult nms_bruteforce(std::uint64_t seed, int cases = 500) {
    CheckResult r{"nms_bruteforce", false, 0, 0, ""};
    Rng rng(seed);
    std::int64_t mismatches = 0;
    for (int i = 0; i < cases; ++i) {
        const auto dets = detail::random_dets(rng, 20, 3);
        const auto a = nms(dets, 0.45);
        const auto b = ref::nms(dets, 0.45);
        bool same = a.size() == b.size();
        for (std::size_t j = 0; same && j < a.size(); ++j)
            same = a[j].score == b[j].score && a[j].class_id == b[j].class_id &&
                   a[j].box.x1 == b[j].box.x1 && a[j].box.y1 == b[j].box.y1 &&
                   a[j].box.x2 == b[j].box.x2 && a[j].box.y2 == b[j].box.y2;
        if (!same) ++mismatches;
    }
    r.measured = static_cast<double>(mismatches);
    r.pass = mismatches == 0;
    r.detail = std::to_string(cases) + " random 20-box instances vs quadratic reference";
    return r;
}

inline CheckResult matcher_exhaustive(std::uint64_t seed, int cases = 500) {
    CheckResult r{"matcher_exhaustive", false, 0, 0, ""};
    Rng rng(seed);
    std::int64_t mismatches = 0;
    for (int i = 0; i < cases; ++i) {
        const int nd = static_cast<int>(rng.uniform_int(0, 5));
        const int ng = static_cast<int>(rng.uniform_int(0, 5));
        auto dets = detail::random_dets(rng, nd, 1);
        std::vector<Box> gts;
        for (const auto& g : detail::random_dets(rng, ng, 1)) gts.push_back(g.box);
        const double t = 0.25 + 0.05 * static_cast<double>(rng.uniform_int(0, 10));

        std::stable_sort(dets.begin(), dets.end(),
                         [](const Detection& a, const Detection& b) { return a.score > b.score; });
        std::vector<daponet::detail::FlatDet> flat;
        std::vector<Box> det_boxes;
        for (const auto& d : dets) {
            flat.push_back({d.score, 0, d.box});
            det_boxes.push_back(d.box);
        }
        const auto greedy = daponet::detail::match_greedy(flat, {gts}, t);
        std::vector<char> brute;
        if (!ref::exhaustive_match(det_boxes, gts, t, brute) || greedy != brute) ++mismatches;
    }
    r.measured = static_cast<double>(mismatches);
    r.pass = mismatches == 0;
    r.detail = std::to_string(cases) + " random instances (<=5 boxes) vs exhaustive enumeration";
    return r;
}

inline CheckResult efficiency_band() {
    CheckResult r{"efficiency_band", false, 0, 0, ""};
    const SummaryReport rep = summarize(preset_svrdd_n(), Mode::Deploy);
    const bool p_ok = rep.total_params >= 1'280'000 && rep.total_params <= 1'920'000;
    const bool f_ok = rep.total_flops >= 1'360'000'000 && rep.total_flops <= 2'040'000'000;
    r.pass = p_ok && f_ok;
    r.measured = static_cast<double>(rep.total_params);
    r.detail = "svrdd-n deploy: " + std::to_string(rep.total_params) + " params, " +
               std::to_string(rep.total_flops) + " FLOPs vs bands [1.28M,1.92M] / [1.36G,2.04G]";
    return r;
}

inline CheckResult accounting_exact() {
    CheckResult r{"accounting_exact", false, 0, 0, ""};
    std::int64_t worst = 0;
    for (const Mode mode : {Mode::Train, Mode::Deploy}) {
        const ModelConfig cfg = preset_svrdd_n();
        Model<float> m = build_model<float>(cfg, mode, 0);
        const WeightStore ws = m.export_store(0);
        const std::int64_t counted = summarize(cfg, mode).total_params;
        worst = std::max(worst, std::abs(counted - ws.element_count(false)));
        worst = std::max(worst, std::abs(counted - m.param_count()));
    }
    r.measured = static_cast<double>(worst);
    r.pass = worst == 0;
    r.detail = "summary totals vs weight-store enumeration, train and deploy";
    return r;
}

inline CheckResult ablation_direction() {
    CheckResult r{"ablation_direction", false, 0, 0, ""};
    const SummaryReport base = summarize(preset_svrdd_n(), Mode::Deploy);
    ModelConfig no_cpda = preset_svrdd_n();
    no_cpda.use_cpda = false;
    ModelConfig no_mcd = preset_svrdd_n();
    no_mcd.use_mcd = false;
    const SummaryReport a = summarize(no_cpda, Mode::Deploy);
    const SummaryReport b = summarize(no_mcd, Mode::Deploy);
    r.pass = a.total_params > base.total_params && a.total_flops > base.total_flops &&
             b.total_params > base.total_params && b.total_flops > base.total_flops;
    r.detail = "baseline substitutes must cost more than CPDA/MCD (params and FLOPs)";
    return r;
}

inline std::vector<CheckResult> run_all(std::uint64_t seed) {
    std::vector<CheckResult> out;
    out.push_back(doconv_fold_f32(seed));
    out.push_back(doconv_fold_f64(seed));
    out.push_back(bn_fold(seed));
    for (const GradOp op : {GradOp::Conv2d, GradOp::Conv1d, GradOp::Matmul, GradOp::Sigmoid,
                            GradOp::Silu, GradOp::Softmax, GradOp::GroupNorm})
        out.push_back(gradient(op, seed));
    out.push_back(conv_pool_oracles(seed));
    out.push_back(ela_constant_trace(seed));
    out.push_back(gc_zero_identity(seed));
    out.push_back(gc_softmax_sum(seed));
    out.push_back(pd_partial_identity(seed));
    out.push_back(nms_bruteforce(seed));
    out.push_back(matcher_exhaustive(seed));
    out.push_back(efficiency_band());
    out.push_back(accounting_exact());
    out.push_back(ablation_direction());
    return out;
}

}  // namespace checks
}  // namespace daponet
