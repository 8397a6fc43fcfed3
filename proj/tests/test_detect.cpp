#include <gtest/gtest.h>

#include <daponet/checks.hpp>
#include <daponet/detect.hpp>

using namespace daponet;

namespace {

ModelConfig small_cfg() {
    auto cfg = preset_svrdd_n();
    cfg.input_h = cfg.input_w = 64;
    return cfg;
}

std::array<Tensor<float>, 3> flat_heads(const ModelConfig& cfg, float logit) {
    std::array<Tensor<float>, 3> heads;
    for (int lvl = 0; lvl < 3; ++lvl) {
        const std::int64_t g = cfg.input_h / cfg.strides[static_cast<std::size_t>(lvl)];
        heads[static_cast<std::size_t>(lvl)] =
            Tensor<float>::full({1, cfg.head_channels(), g, g}, logit);
    }
    return heads;
}

GroundTruthSet one_class_gt(const std::vector<std::vector<Box>>& images) {
    GroundTruthSet gt;
    gt.classes = {"crack"};
    for (std::size_t i = 0; i < images.size(); ++i) {
        GtImage img;
        img.id = static_cast<std::int64_t>(i);
        img.file = "img" + std::to_string(i) + ".ppm";
        img.width = img.height = 200;
        for (const auto& b : images[i]) img.boxes.push_back({b, 0});
        gt.images.push_back(img);
    }
    return gt;
}

}  // namespace

TEST(Iou, HandValues) {
    const Box a{0, 0, 10, 10};
    EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
    EXPECT_DOUBLE_EQ(iou(a, Box{20, 20, 30, 30}), 0.0);
    EXPECT_DOUBLE_EQ(iou(a, Box{10, 0, 20, 10}), 0.0);  // touching edges do not overlap
    // unit squares offset by half: inter 0.5, union 1.5
    const Box u{0, 0, 1, 1}, v{0.5, 0, 1.5, 1};
    EXPECT_NEAR(iou(u, v), 1.0 / 3.0, 1e-15);
    EXPECT_DOUBLE_EQ(iou(u, v), iou(v, u));
}

TEST(Decode, OneHotDistributionRecoversHandBox) {
    const auto cfg = small_cfg();
    auto heads = flat_heads(cfg, -40.0f);
    // light up cell (y=2, x=3) on the stride-8 level: distances in stride
    // units are left=1, top=2, right=3, bottom=1 via one-hot bins
    const std::int64_t bins = cfg.dfl_bins;
    heads[0].at(0, 0 * bins + 1, 2, 3) = 40.0f;
    heads[0].at(0, 1 * bins + 2, 2, 3) = 40.0f;
    heads[0].at(0, 2 * bins + 3, 2, 3) = 40.0f;
    heads[0].at(0, 3 * bins + 1, 2, 3) = 40.0f;
    heads[0].at(0, 4 * bins + 1, 2, 3) = 5.0f;  // class 1 logit
    const auto dets = decode(heads, cfg, 0.25);
    ASSERT_EQ(dets.size(), 1u);
    EXPECT_EQ(dets[0].class_id, 1);
    EXPECT_NEAR(dets[0].score, 1.0 / (1.0 + std::exp(-5.0)), 1e-6);
    // anchor (28, 20), stride 8: box = (28-8, 20-16, 28+24, 20+8)
    EXPECT_NEAR(dets[0].box.x1, 20.0, 1e-4);
    EXPECT_NEAR(dets[0].box.y1, 4.0, 1e-4);
    EXPECT_NEAR(dets[0].box.x2, 52.0, 1e-4);
    EXPECT_NEAR(dets[0].box.y2, 28.0, 1e-4);
}

TEST(Decode, LowLogitsYieldNothing) {
    const auto cfg = small_cfg();
    const auto heads = flat_heads(cfg, -40.0f);
    EXPECT_TRUE(decode(heads, cfg, 0.25).empty());
}

TEST(Decode, AtMostOneDetectionPerCell) {
    const auto cfg = small_cfg();
    Rng rng(71);
    std::array<Tensor<float>, 3> heads;
    for (int lvl = 0; lvl < 3; ++lvl) {
        const std::int64_t g = cfg.input_h / cfg.strides[static_cast<std::size_t>(lvl)];
        heads[static_cast<std::size_t>(lvl)] =
            rng.uniform_tensor<float>({1, cfg.head_channels(), g, g}, -3.0, 3.0);
    }
    const auto dets = decode(heads, cfg, 0.0);
    EXPECT_LE(dets.size(), 64u + 16u + 4u);
    for (const auto& d : dets) {
        EXPECT_GE(d.box.x1, 0.0);
        EXPECT_GE(d.box.y1, 0.0);
        EXPECT_LE(d.box.x2, 64.0);
        EXPECT_LE(d.box.y2, 64.0);
        EXPECT_LT(d.box.x1, d.box.x2);
        EXPECT_LT(d.box.y1, d.box.y2);
    }
}

TEST(Decode, RejectsMismatchedHeadShapes) {
    const auto cfg = small_cfg();
    auto heads = flat_heads(cfg, 0.0f);
    heads[1] = Tensor<float>({1, cfg.head_channels(), 5, 4});
    EXPECT_THROW(decode(heads, cfg), ShapeError);
    heads = flat_heads(cfg, 0.0f);
    heads[0] = Tensor<float>({1, cfg.head_channels() - 1, 8, 8});
    EXPECT_THROW(decode(heads, cfg), ShapeError);
}

TEST(Nms, SuppressesWithinClassOnly) {
    std::vector<Detection> dets = {
        {{0, 0, 10, 10}, 0, 0.9},
        {{1, 1, 11, 11}, 0, 0.8},   // overlaps the first, same class
        {{1, 1, 11, 11}, 1, 0.7},   // same box, other class survives
        {{50, 50, 60, 60}, 0, 0.6}  // far away
    };
    const auto kept = nms(dets, 0.45);
    ASSERT_EQ(kept.size(), 3u);
    EXPECT_DOUBLE_EQ(kept[0].score, 0.9);
    EXPECT_DOUBLE_EQ(kept[1].score, 0.7);
    EXPECT_DOUBLE_EQ(kept[2].score, 0.6);
    // idempotent: a suppressed set has no remaining overlaps
    const auto twice = nms(kept, 0.45);
    ASSERT_EQ(twice.size(), kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i) EXPECT_EQ(twice[i].score, kept[i].score);
    EXPECT_THROW(nms(dets, 0.0), ValueError);
    EXPECT_THROW(nms(dets, 1.5), ValueError);
}

TEST(Nms, AgreesWithBruteForce) {
    const auto r = checks::nms_bruteforce(71);
    EXPECT_TRUE(r.pass) << r.detail;
}

TEST(Matcher, AgreesWithExhaustiveEnumeration) {
    const auto r = checks::matcher_exhaustive(71);
    EXPECT_TRUE(r.pass) << r.detail;
}

TEST(Evaluate, PerfectDetectionsScoreOne) {
    const auto gt = one_class_gt({{{0, 0, 10, 10}, {20, 20, 30, 30}}, {{5, 5, 15, 15}}});
    std::vector<std::vector<Detection>> preds(2);
    for (std::size_t i = 0; i < 2; ++i)
        for (const auto& inst : gt.images[i].boxes) preds[i].push_back({inst.box, 0, 1.0});
    const auto r = evaluate(preds, gt);
    EXPECT_DOUBLE_EQ(r.precision, 1.0);
    EXPECT_DOUBLE_EQ(r.recall, 1.0);
    EXPECT_DOUBLE_EQ(r.map50, 1.0);
    EXPECT_DOUBLE_EQ(r.map50_95, 1.0);
}

TEST(Evaluate, MissedObjectsDropRecall) {
    const auto gt = one_class_gt({{{0, 0, 10, 10}}});
    std::vector<std::vector<Detection>> preds(1);  // no detections at all
    const auto r = evaluate(preds, gt);
    EXPECT_DOUBLE_EQ(r.recall, 0.0);
    EXPECT_DOUBLE_EQ(r.map50, 0.0);
    EXPECT_DOUBLE_EQ(r.map50_95, 0.0);
}

TEST(Evaluate, HandComputedApFixture) {
    // 3 ground truths, 4 detections, one false positive ranked second:
    // cumulative precision 1, 1/2, 2/3, 3/4 at recall 1/3, 1/3, 2/3, 1
    const auto gt = one_class_gt({{{0, 0, 10, 10}, {20, 20, 30, 30}, {40, 40, 50, 50}}});
    std::vector<std::vector<Detection>> preds(1);
    preds[0].push_back({{0, 0, 10, 10}, 0, 0.9});
    preds[0].push_back({{100, 100, 110, 110}, 0, 0.8});
    preds[0].push_back({{20, 20, 30, 30}, 0, 0.7});
    preds[0].push_back({{40, 40, 50, 50}, 0, 0.6});
    const auto r = evaluate(preds, gt, 0.25);
    // 101-point average: 34 points at precision 1, 67 at the 0.75 plateau
    const double want = (34.0 * 1.0 + 67.0 * 0.75) / 101.0;
    EXPECT_NEAR(r.map50, want, 1e-12);
    EXPECT_NEAR(r.map50_95, want, 1e-12);  // matches are exact at every threshold
    EXPECT_DOUBLE_EQ(r.precision, 0.75);
    EXPECT_DOUBLE_EQ(r.recall, 1.0);
}

TEST(Evaluate, ApIgnoresScoreRescaling) {
    Rng rng(72);
    const auto gt = one_class_gt({{{0, 0, 10, 10}, {30, 0, 45, 20}, {60, 60, 90, 95}}});
    std::vector<std::vector<Detection>> preds(1), scaled(1);
    for (int i = 0; i < 12; ++i) {
        Detection d;
        const double cx = rng.uniform(5.0, 95.0), cy = rng.uniform(5.0, 95.0);
        const double w = rng.uniform(4.0, 30.0), h = rng.uniform(4.0, 30.0);
        d.box = {cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
        d.score = rng.uniform(0.1, 1.0);
        preds[0].push_back(d);
        d.score = 0.05 + d.score / 2;  // monotone map keeps the ranking
        scaled[0].push_back(d);
    }
    const auto a = evaluate(preds, gt, 0.0);
    const auto b = evaluate(scaled, gt, 0.0);
    EXPECT_DOUBLE_EQ(a.map50, b.map50);
    EXPECT_DOUBLE_EQ(a.map50_95, b.map50_95);
    EXPECT_GE(a.map50, a.map50_95);
}

TEST(Evaluate, ZeroGtClassesAreExcludedButTheirFpsCount) {
    GroundTruthSet gt = one_class_gt({{{0, 0, 10, 10}}});
    gt.classes.push_back("pothole");  // class 1 never appears in the annotations
    std::vector<std::vector<Detection>> preds(1);
    preds[0].push_back({{0, 0, 10, 10}, 0, 0.9});
    preds[0].push_back({{50, 50, 60, 60}, 1, 0.9});  // confident phantom class
    const auto r = evaluate(preds, gt, 0.25);
    ASSERT_EQ(r.class_ap.size(), 2u);
    EXPECT_DOUBLE_EQ(r.class_ap[0][0], 1.0);
    EXPECT_DOUBLE_EQ(r.class_ap[1][0], -1.0);
    EXPECT_DOUBLE_EQ(r.map50, 1.0);  // mean over annotated classes only
    EXPECT_DOUBLE_EQ(r.recall, 1.0);
    EXPECT_DOUBLE_EQ(r.precision, 0.5);  // the phantom detection is a false positive
}

TEST(Evaluate, RejectsDegenerateInputs) {
    GroundTruthSet empty = one_class_gt({{}});
    std::vector<std::vector<Detection>> preds(1);
    EXPECT_THROW(evaluate(preds, empty), ValueError);  // no ground truth anywhere
    const auto gt = one_class_gt({{{0, 0, 10, 10}}});
    std::vector<std::vector<Detection>> mismatched(2);
    EXPECT_THROW(evaluate(mismatched, gt), ValueError);
}

TEST(GroundTruth, ParsesValidAnnotations) {
    const std::string text = R"({
      "classes": ["crack", "pothole"],
      "images": [
        {"id": 1, "file": "a.ppm", "width": 100, "height": 80,
         "boxes": [{"x": 5, "y": 6, "w": 20, "h": 10, "class": 1}]},
        {"id": 2, "file": "b.ppm", "width": 64, "height": 64, "boxes": []}
      ]
    })";
    const auto gt = parse_ground_truth(text);
    ASSERT_EQ(gt.images.size(), 2u);
    EXPECT_EQ(gt.classes[1], "pothole");
    ASSERT_EQ(gt.images[0].boxes.size(), 1u);
    EXPECT_DOUBLE_EQ(gt.images[0].boxes[0].box.x2, 25.0);
    EXPECT_DOUBLE_EQ(gt.images[0].boxes[0].box.y2, 16.0);
    EXPECT_EQ(gt.images[0].boxes[0].class_id, 1);
}

TEST(GroundTruth, RejectsMalformedAnnotations) {
    EXPECT_THROW(parse_ground_truth("not json"), FormatError);
    EXPECT_THROW(parse_ground_truth(R"({"images": []})"), FormatError);  // classes missing
    const std::string dup = R"({"classes":["c"],"images":[
      {"id":1,"file":"a.ppm","width":10,"height":10,"boxes":[]},
      {"id":1,"file":"b.ppm","width":10,"height":10,"boxes":[]}]})";
    EXPECT_THROW(parse_ground_truth(dup), FormatError);
    const std::string bad_box = R"({"classes":["c"],"images":[
      {"id":1,"file":"a.ppm","width":10,"height":10,
       "boxes":[{"x":0,"y":0,"w":0,"h":5,"class":0}]}]})";
    EXPECT_THROW(parse_ground_truth(bad_box), FormatError);
    const std::string bad_class = R"({"classes":["c"],"images":[
      {"id":1,"file":"a.ppm","width":10,"height":10,
       "boxes":[{"x":0,"y":0,"w":5,"h":5,"class":3}]}]})";
    EXPECT_THROW(parse_ground_truth(bad_class), FormatError);
    const std::string bad_size = R"({"classes":["c"],"images":[
      {"id":1,"file":"a.ppm","width":0,"height":10,"boxes":[]}]})";
    EXPECT_THROW(parse_ground_truth(bad_size), FormatError);
    EXPECT_THROW(load_ground_truth("/nonexistent/path/gt.json"), IoError);
}
