#pragma once

// Detection post-processing and evaluation: grid decode of the raw head
// maps, IoU, class-aware NMS, and COCO-style metrics (precision, recall,
// mAP50, mAP50-95) with a greedy highest-IoU matcher.

#include <algorithm>
#include <fstream>

#include "model.hpp"

namespace daponet {

constexpr double kDefaultConfThr = 0.25;
constexpr double kDefaultNmsIou = 0.45;
constexpr double kDefaultScoreThr = 0.25;

struct Box {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
    double area() const { return std::max(0.0, x2 - x1) * std::max(0.0, y2 - y1); }
};

struct Detection {
    Box box;
    int class_id = 0;
    double score = 0;
};

inline double iou(const Box& a, const Box& b) {
    const double ix = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const double iy = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    if (ix <= 0 || iy <= 0) return 0.0;
    const double inter = ix * iy;
    const double uni = a.area() + b.area() - inter;
    return uni > 0 ? inter / uni : 0.0;
}

// Head maps carry 4*dfl_bins box channels (side-major: all bins of the left
// distance first, then top, right, bottom) followed by num_classes logits.
// Each cell proposes one box around its anchor point ((j+0.5)*stride); the
// per-side distance is the softmax expectation over the bins, in stride
// units. Boxes are clipped to the model input frame; degenerate boxes and
// cells whose best class score falls below conf_thr are dropped.
template <typename T>
std::vector<Detection> decode(const std::array<Tensor<T>, 3>& heads, const ModelConfig& cfg,
                              double conf_thr = kDefaultConfThr) {
    const std::int64_t bins = cfg.dfl_bins;
    const std::int64_t nc = cfg.num_classes;
    std::vector<Detection> out;
    for (int lvl = 0; lvl < 3; ++lvl) {
        const Tensor<T>& m = heads[static_cast<std::size_t>(lvl)];
        const std::int64_t s = cfg.strides[static_cast<std::size_t>(lvl)];
        const std::int64_t gh = cfg.input_h / s, gw = cfg.input_w / s;
        if (m.rank() != 4 || m.extent(0) != 1 || m.extent(1) != 4 * bins + nc ||
            m.extent(2) != gh || m.extent(3) != gw)
            throw ShapeError("decode: head at stride " + std::to_string(s) + " has shape " +
                             shape_str(m.shape()) + ", expected [1," +
                             std::to_string(4 * bins + nc) + "," + std::to_string(gh) + "," +
                             std::to_string(gw) + "]");
        std::vector<double> prob(static_cast<std::size_t>(bins));
        for (std::int64_t gy = 0; gy < gh; ++gy) {
            for (std::int64_t gx = 0; gx < gw; ++gx) {
                int best_c = 0;
                double best_logit = static_cast<double>(m.at(0, 4 * bins, gy, gx));
                for (std::int64_t c = 1; c < nc; ++c) {
                    const double v = static_cast<double>(m.at(0, 4 * bins + c, gy, gx));
                    if (v > best_logit) {
                        best_logit = v;
                        best_c = static_cast<int>(c);
                    }
                }
                const double score = 1.0 / (1.0 + std::exp(-best_logit));
                if (score < conf_thr) continue;

                double dist[4];
                for (int side = 0; side < 4; ++side) {
                    double mx = -std::numeric_limits<double>::infinity();
                    for (std::int64_t b = 0; b < bins; ++b)
                        mx = std::max(mx,
                                      static_cast<double>(m.at(0, side * bins + b, gy, gx)));
                    double sum = 0;
                    for (std::int64_t b = 0; b < bins; ++b) {
                        prob[static_cast<std::size_t>(b)] = std::exp(
                            static_cast<double>(m.at(0, side * bins + b, gy, gx)) - mx);
                        sum += prob[static_cast<std::size_t>(b)];
                    }
                    double e = 0;
                    for (std::int64_t b = 0; b < bins; ++b)
                        e += static_cast<double>(b) * prob[static_cast<std::size_t>(b)] / sum;
                    dist[side] = e * static_cast<double>(s);
                }
                const double ax = (static_cast<double>(gx) + 0.5) * static_cast<double>(s);
                const double ay = (static_cast<double>(gy) + 0.5) * static_cast<double>(s);
                Box box;
                box.x1 = std::clamp(ax - dist[0], 0.0, static_cast<double>(cfg.input_w));
                box.y1 = std::clamp(ay - dist[1], 0.0, static_cast<double>(cfg.input_h));
                box.x2 = std::clamp(ax + dist[2], 0.0, static_cast<double>(cfg.input_w));
                box.y2 = std::clamp(ay + dist[3], 0.0, static_cast<double>(cfg.input_h));
                if (box.x2 - box.x1 <= 0 || box.y2 - box.y1 <= 0) continue;
                out.push_back({box, best_c, score});
            }
        }
    }
    return out;
}

// Greedy suppression per class in descending score order. Stable sort keeps
// equal-score detections in input order, so the result is deterministic and
// the operation is idempotent.
inline std::vector<Detection> nms(std::vector<Detection> dets, double iou_thr = kDefaultNmsIou) {
    if (iou_thr <= 0 || iou_thr >= 1)
        throw ValueError("nms: iou threshold must lie in (0,1), got " + std::to_string(iou_thr));
    std::stable_sort(dets.begin(), dets.end(),
                     [](const Detection& a, const Detection& b) { return a.score > b.score; });
    std::vector<Detection> kept;
    for (const Detection& d : dets) {
        bool suppressed = false;
        for (const Detection& k : kept) {
            if (k.class_id != d.class_id) continue;
            if (iou(k.box, d.box) > iou_thr) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(d);
    }
    return kept;
}

// ---------------------------------------------------------------------------
// Ground truth and evaluation.

struct GtInstance {
    Box box;
    int class_id = 0;
};

struct GtImage {
    std::int64_t id = 0;
    std::string file;
    std::int64_t width = 0, height = 0;
    std::vector<GtInstance> boxes;
};

struct GroundTruthSet {
    std::vector<GtImage> images;
    std::vector<std::string> classes;
};

// Annotation JSON:
//   {"images":[{"id","file","width","height",
//               "boxes":[{"x","y","w","h","class"}]}],
//    "classes":["name", ...]}
// with pixel units and a top-left origin.
inline GroundTruthSet parse_ground_truth(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("annotations: invalid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("images") || !j["images"].is_array() ||
        !j.contains("classes") || !j["classes"].is_array())
        throw FormatError("annotations: need an object with 'images' and 'classes' arrays");
    GroundTruthSet gt;
    for (const auto& name : j["classes"]) {
        if (!name.is_string()) throw FormatError("annotations: class names must be strings");
        gt.classes.push_back(name.get<std::string>());
    }
    if (gt.classes.empty()) throw FormatError("annotations: class list is empty");
    std::vector<std::int64_t> seen_ids;
    for (const auto& im : j["images"]) {
        if (!im.is_object() || !im.contains("id") || !im.contains("file") ||
            !im.contains("width") || !im.contains("height") || !im.contains("boxes"))
            throw FormatError("annotations: image entries need id/file/width/height/boxes");
        GtImage g;
        g.id = im["id"].get<std::int64_t>();
        g.file = im["file"].get<std::string>();
        g.width = im["width"].get<std::int64_t>();
        g.height = im["height"].get<std::int64_t>();
        if (g.width < 1 || g.height < 1)
            throw FormatError("annotations: image " + std::to_string(g.id) + " has empty size");
        if (std::find(seen_ids.begin(), seen_ids.end(), g.id) != seen_ids.end())
            throw FormatError("annotations: duplicate image id " + std::to_string(g.id));
        seen_ids.push_back(g.id);
        for (const auto& b : im["boxes"]) {
            if (!b.is_object() || !b.contains("x") || !b.contains("y") || !b.contains("w") ||
                !b.contains("h") || !b.contains("class"))
                throw FormatError("annotations: boxes need x/y/w/h/class");
            const double x = b["x"].get<double>(), y = b["y"].get<double>();
            const double w = b["w"].get<double>(), h = b["h"].get<double>();
            const std::int64_t cls = b["class"].get<std::int64_t>();
            if (w <= 0 || h <= 0)
                throw FormatError("annotations: box with non-positive size in image " +
                                  std::to_string(g.id));
            if (cls < 0 || cls >= static_cast<std::int64_t>(gt.classes.size()))
                throw FormatError("annotations: class id " + std::to_string(cls) +
                                  " out of range for " + std::to_string(gt.classes.size()) +
                                  " classes");
            g.boxes.push_back({{x, y, x + w, y + h}, static_cast<int>(cls)});
        }
        gt.images.push_back(std::move(g));
    }
    return gt;
}

inline GroundTruthSet load_ground_truth(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open annotations file " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (!in.good() && !in.eof()) throw IoError("failed reading annotations file " + path);
    return parse_ground_truth(text);
}

struct EvalResult {
    double precision = 0;
    double recall = 0;
    double map50 = 0;
    double map50_95 = 0;
    // class_ap[c][k] = AP of class c at IoU 0.50 + 0.05k; -1 marks a class
    // with no ground truth (excluded from the means).
    std::vector<std::array<double, 10>> class_ap;
    std::vector<std::int64_t> class_gt;
};

namespace detail {

struct FlatDet {
    double score;
    std::size_t image;
    Box box;
};

// Match score-sorted detections of one class against that class's GT boxes
// at IoU threshold t. Each detection grabs the unmatched GT with the highest
// IoU; it is a true positive when that IoU reaches t. Returns tp flags
// aligned with `dets` order.
inline std::vector<char> match_greedy(const std::vector<FlatDet>& dets,
                                      const std::vector<std::vector<Box>>& gt_boxes, double t) {
    std::vector<std::vector<char>> used(gt_boxes.size());
    for (std::size_t i = 0; i < gt_boxes.size(); ++i) used[i].assign(gt_boxes[i].size(), 0);
    std::vector<char> tp(dets.size(), 0);
    for (std::size_t d = 0; d < dets.size(); ++d) {
        const auto& boxes = gt_boxes[dets[d].image];
        double best = 0;
        std::size_t best_g = boxes.size();
        for (std::size_t g = 0; g < boxes.size(); ++g) {
            if (used[dets[d].image][g]) continue;
            const double v = iou(dets[d].box, boxes[g]);
            if (v > best) {
                best = v;
                best_g = g;
            }
        }
        if (best_g < boxes.size() && best >= t) {
            tp[d] = 1;
            used[dets[d].image][best_g] = 1;
        }
    }
    return tp;
}

// 101-point interpolated AP from tp flags in descending-score order.
inline double ap_101(const std::vector<char>& tp, std::int64_t n_gt) {
    std::vector<double> rec, prec;
    std::int64_t cum_tp = 0, cum_fp = 0;
    for (const char f : tp) {
        (f ? cum_tp : cum_fp) += 1;
        rec.push_back(static_cast<double>(cum_tp) / static_cast<double>(n_gt));
        prec.push_back(static_cast<double>(cum_tp) / static_cast<double>(cum_tp + cum_fp));
    }
    std::vector<double> pmax(prec.size());
    double running = 0;
    for (std::size_t i = prec.size(); i-- > 0;) {
        running = std::max(running, prec[i]);
        pmax[i] = running;
    }
    double ap = 0;
    std::size_t idx = 0;
    for (int k = 0; k <= 100; ++k) {
        const double r = static_cast<double>(k) / 100.0;
        while (idx < rec.size() && rec[idx] < r - 1e-12) ++idx;
        if (idx < rec.size()) ap += pmax[idx];
    }
    return ap / 101.0;
}

}  // namespace detail

// COCO-style evaluation. `preds` is indexed parallel to `gt.images`. AP per
// class per IoU threshold in {0.50..0.95 step 0.05}; classes without ground
// truth are excluded from the means. Precision/recall are micro-averaged
// over detections with score >= score_thr at IoU 0.50.
inline EvalResult evaluate(const std::vector<std::vector<Detection>>& preds,
                           const GroundTruthSet& gt, double score_thr = kDefaultScoreThr) {
    if (preds.size() != gt.images.size())
        throw ValueError("evaluate: " + std::to_string(preds.size()) + " prediction lists vs " +
                         std::to_string(gt.images.size()) + " annotated images");
    const std::size_t nc = gt.classes.size();

    std::vector<std::vector<detail::FlatDet>> dets_by_class(nc);
    std::vector<std::vector<std::vector<Box>>> gt_by_class(nc);
    for (auto& g : gt_by_class) g.resize(gt.images.size());
    std::vector<std::int64_t> n_gt(nc, 0);
    for (std::size_t i = 0; i < gt.images.size(); ++i) {
        for (const auto& inst : gt.images[i].boxes) {
            gt_by_class[static_cast<std::size_t>(inst.class_id)][i].push_back(inst.box);
            n_gt[static_cast<std::size_t>(inst.class_id)] += 1;
        }
        for (const auto& d : preds[i]) {
            if (d.class_id < 0 || static_cast<std::size_t>(d.class_id) >= nc)
                throw ValueError("evaluate: detection class id " + std::to_string(d.class_id) +
                                 " out of range");
            dets_by_class[static_cast<std::size_t>(d.class_id)].push_back({d.score, i, d.box});
        }
    }
    if (std::all_of(n_gt.begin(), n_gt.end(), [](std::int64_t n) { return n == 0; }))
        throw ValueError("evaluate: ground truth is empty for every class, mAP is undefined");

    for (auto& dets : dets_by_class)
        std::stable_sort(dets.begin(), dets.end(), [](const detail::FlatDet& a,
                                                      const detail::FlatDet& b) {
            return a.score > b.score;
        });

    EvalResult res;
    res.class_gt = n_gt;
    res.class_ap.assign(nc, {});
    double sum50 = 0, sum_all = 0;
    std::int64_t classes_with_gt = 0;
    std::int64_t micro_tp = 0, micro_fp = 0, total_gt = 0;
    for (std::size_t c = 0; c < nc; ++c) {
        total_gt += n_gt[c];
        // micro P/R at the score threshold, IoU 0.50; runs for zero-GT
        // classes too, where every confident detection is a false positive
        std::vector<detail::FlatDet> strong;
        for (const auto& d : dets_by_class[c])
            if (d.score >= score_thr) strong.push_back(d);
        const auto micro = detail::match_greedy(strong, gt_by_class[c], 0.50);
        for (const char f : micro) (f ? micro_tp : micro_fp) += 1;

        if (n_gt[c] == 0) {
            res.class_ap[c].fill(-1.0);
            continue;
        }
        classes_with_gt += 1;
        for (int k = 0; k < 10; ++k) {
            const double t = 0.50 + 0.05 * k;
            const auto tp = detail::match_greedy(dets_by_class[c], gt_by_class[c], t);
            const double ap = detail::ap_101(tp, n_gt[c]);
            res.class_ap[c][static_cast<std::size_t>(k)] = ap;
            sum_all += ap;
            if (k == 0) sum50 += ap;
        }
    }
    res.map50 = sum50 / static_cast<double>(classes_with_gt);
    res.map50_95 = sum_all / static_cast<double>(10 * classes_with_gt);
    res.precision =
        (micro_tp + micro_fp) > 0
            ? static_cast<double>(micro_tp) / static_cast<double>(micro_tp + micro_fp)
            : 0.0;
    res.recall = total_gt > 0 ? static_cast<double>(micro_tp) / static_cast<double>(total_gt)
                              : 0.0;
    return res;
}

}  // namespace daponet
