#include <gtest/gtest.h>

#include <daponet/model.hpp>
#include <set>

using namespace daponet;

TEST(Config, ValidationCatchesBadSettings) {
    ModelConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    cfg.input_w = 100;  // not a multiple of 32
    EXPECT_THROW(cfg.validate(), ValueError);
    cfg = ModelConfig{};
    cfg.num_classes = 0;
    EXPECT_THROW(cfg.validate(), ValueError);
    cfg = ModelConfig{};
    cfg.dfl_bins = 1;
    EXPECT_THROW(cfg.validate(), ValueError);
    cfg = ModelConfig{};
    cfg.stage_channels[2] = 66;  // stage width not divisible by 4
    EXPECT_THROW(cfg.validate(), ValueError);
    cfg = ModelConfig{};
    cfg.cpda_depths[1] = -1;
    EXPECT_THROW(cfg.validate(), ValueError);
    cfg = ModelConfig{};
    cfg.neck_channels = {32, 32, 64};  // needs all four widths
    EXPECT_THROW(cfg.validate(), ValueError);
}

TEST(Config, PresetsAndDerivedNeck) {
    const auto p = preset_svrdd_n();
    EXPECT_EQ(p.num_classes, 7);
    EXPECT_EQ(p.stage_channels, (std::vector<std::int64_t>{16, 24, 32, 96, 384}));
    EXPECT_EQ(p.resolved_neck(), (std::array<std::int64_t, 4>{32, 32, 64, 384}));
    const auto c = preset_coco_n();
    EXPECT_EQ(c.num_classes, 80);
    ModelConfig plain;  // empty neck derives from stage widths
    EXPECT_EQ(plain.resolved_neck(), (std::array<std::int64_t, 4>{128, 64, 128, 256}));
    EXPECT_EQ(preset_by_name("svrdd-n").fingerprint(Mode::Deploy),
              p.fingerprint(Mode::Deploy));
    EXPECT_THROW(preset_by_name("unknown"), ValueError);
    EXPECT_EQ(p.head_channels(), 4 * 16 + 7);
}

TEST(Summary, PinnedTotalsForFrozenPresets) {
    const auto p = preset_svrdd_n();
    const auto deploy = summarize(p, Mode::Deploy);
    EXPECT_EQ(deploy.total_params, 1556575);
    EXPECT_EQ(deploy.total_flops, 1853224092);
    const auto train = summarize(p, Mode::Train);
    EXPECT_EQ(train.total_params, 1571802);
    EXPECT_EQ(train.total_flops, 1906356892);

    auto no_cpda = p;
    no_cpda.use_cpda = false;
    const auto a = summarize(no_cpda, Mode::Deploy);
    EXPECT_EQ(a.total_params, 2913141);
    EXPECT_EQ(a.total_flops, 3503052800);

    auto no_mcd = p;
    no_mcd.use_mcd = false;
    const auto b = summarize(no_mcd, Mode::Deploy);
    EXPECT_EQ(b.total_params, 1741407);
    EXPECT_EQ(b.total_flops, 2143016092);

    auto no_both = p;
    no_both.use_cpda = false;
    no_both.use_mcd = false;
    const auto c = summarize(no_both, Mode::Deploy);
    EXPECT_EQ(c.total_params, 3097973);
    EXPECT_EQ(c.total_flops, 3792844800);

    auto small = p;
    small.input_h = small.input_w = 320;
    const auto d = summarize(small, Mode::Deploy);
    EXPECT_EQ(d.total_params, 1556575);  // params do not depend on input size
    EXPECT_EQ(d.total_flops, 463508892);

    const auto coco = summarize(preset_coco_n(), Mode::Deploy);
    EXPECT_EQ(coco.total_params, 1591834);

    const auto bare = summarize(ModelConfig{}, Mode::Deploy);
    EXPECT_EQ(bare.total_params, 1148345);
    EXPECT_EQ(bare.total_flops, 2446609168);
}

TEST(Summary, AccountingAgreesWithLiveModel) {
    auto cfg = preset_svrdd_n();
    cfg.input_h = cfg.input_w = 64;  // cheap to build, params are size-free
    for (const auto mode : {Mode::Train, Mode::Deploy}) {
        auto m = build_model<float>(cfg, mode, 0);
        const auto report = summarize(cfg, mode);
        EXPECT_EQ(m.param_count(), report.total_params);
        const auto ws = m.export_store(0);
        EXPECT_EQ(ws.element_count(false), report.total_params);
        std::int64_t row_sum = 0;
        for (const auto& r : report.rows) row_sum += r.params;
        EXPECT_EQ(row_sum, report.total_params);
    }
}

TEST(Model, VisitNamesAreUniqueAndOrdered) {
    auto cfg = preset_svrdd_n();
    cfg.input_h = cfg.input_w = 64;
    auto m = Model<float>::build(cfg, Mode::Train);
    std::vector<std::string> names;
    m.visit([&](const std::string& n, Tensor<float>&, bool) { names.push_back(n); });
    std::set<std::string> unique(names.begin(), names.end());
    EXPECT_EQ(unique.size(), names.size());
    ASSERT_FALSE(names.empty());
    EXPECT_EQ(names.front(), "backbone.stem.conv.weight");
    EXPECT_NE(std::find(names.begin(), names.end(), "head.p5.cls.bias"), names.end());
    // visiting twice yields the identical sequence
    std::vector<std::string> again;
    m.visit([&](const std::string& n, Tensor<float>&, bool) { again.push_back(n); });
    EXPECT_EQ(names, again);
}

TEST(Model, ForwardHeadShapes) {
    auto cfg = preset_svrdd_n();
    cfg.input_h = cfg.input_w = 64;
    auto m = build_model<float>(cfg, Mode::Deploy, 0);
    Rng rng(61);
    const auto x = rng.uniform_tensor<float>({1, 3, 64, 64}, 0.0, 1.0);
    const auto heads = m.forward(x);
    const std::int64_t hc = cfg.head_channels();
    EXPECT_EQ(heads[0].shape(), (std::vector<std::int64_t>{1, hc, 8, 8}));
    EXPECT_EQ(heads[1].shape(), (std::vector<std::int64_t>{1, hc, 4, 4}));
    EXPECT_EQ(heads[2].shape(), (std::vector<std::int64_t>{1, hc, 2, 2}));
    Tensor<float> wrong({1, 3, 32, 32});
    EXPECT_THROW(m.forward(wrong), ShapeError);
    Tensor<float> gray({1, 1, 64, 64});
    EXPECT_THROW(m.forward(gray), ShapeError);
}

TEST(Model, FoldPreservesForwardOutputs) {
    auto cfg = preset_svrdd_n();
    cfg.input_h = cfg.input_w = 64;
    auto train = build_model<double>(cfg, Mode::Train, 7);
    auto folded = train.fold();
    EXPECT_EQ(folded.mode, Mode::Deploy);
    Rng rng(62);
    const auto x = rng.uniform_tensor<double>({1, 3, 64, 64}, 0.0, 1.0);
    const auto a = train.forward(x);
    const auto b = folded.forward(x);
    for (int lvl = 0; lvl < 3; ++lvl) {
        ASSERT_EQ(a[lvl].shape(), b[lvl].shape());
        for (std::int64_t i = 0; i < a[lvl].size(); ++i)
            ASSERT_NEAR(a[lvl][i], b[lvl][i], 1e-9);
    }
    EXPECT_THROW(folded.fold(), ValueError);
}

TEST(Model, FingerprintSensitivity) {
    const auto cfg = preset_svrdd_n();
    const auto fp = cfg.fingerprint(Mode::Deploy);
    EXPECT_EQ(fp.size(), 16u);
    EXPECT_NE(fp, cfg.fingerprint(Mode::Train));
    auto other = cfg;
    other.num_classes = 5;
    EXPECT_NE(fp, other.fingerprint(Mode::Deploy));
    other = cfg;
    other.use_mcd = false;
    EXPECT_NE(fp, other.fingerprint(Mode::Deploy));
    // the fingerprint deliberately ignores the input size
    other = cfg;
    other.input_h = other.input_w = 320;
    EXPECT_EQ(fp, other.fingerprint(Mode::Deploy));
}

TEST(Model, StoreRoundTripAndStrictness) {
    auto cfg = preset_svrdd_n();
    cfg.input_h = cfg.input_w = 64;
    auto m = build_model<float>(cfg, Mode::Deploy, 3);
    auto ws = m.export_store(3);

    auto fresh = Model<float>::build(cfg, Mode::Deploy);
    fresh.import_store(ws);
    Rng rng(63);
    const auto x = rng.uniform_tensor<float>({1, 3, 64, 64}, 0.0, 1.0);
    const auto a = m.forward(x);
    const auto b = fresh.forward(x);
    for (int lvl = 0; lvl < 3; ++lvl)
        for (std::int64_t i = 0; i < a[lvl].size(); ++i) ASSERT_EQ(a[lvl][i], b[lvl][i]);

    // wrong configuration is rejected by fingerprint before any copying
    auto other_cfg = cfg;
    other_cfg.num_classes = 5;
    auto wrong = Model<float>::build(other_cfg, Mode::Deploy);
    EXPECT_THROW(wrong.import_store(ws), FingerprintError);

    // truncated, reordered, and over-long stores are rejected structurally
    auto truncated = ws;
    truncated.tensors.pop_back();
    auto t1 = Model<float>::build(cfg, Mode::Deploy);
    EXPECT_THROW(t1.import_store(truncated, false), FormatError);
    auto reordered = ws;
    std::swap(reordered.tensors[0], reordered.tensors[1]);
    EXPECT_THROW(t1.import_store(reordered, false), FormatError);
    auto extra = ws;
    extra.tensors.push_back(ws.tensors.back());
    EXPECT_THROW(t1.import_store(extra, false), FormatError);
    auto reshaped = ws;
    reshaped.tensors[0].shape[0] += 1;
    EXPECT_THROW(t1.import_store(reshaped, false), ShapeError);
}

TEST(Model, SeedDeterminesWeights) {
    auto cfg = preset_svrdd_n();
    cfg.input_h = cfg.input_w = 64;
    auto a = build_model<float>(cfg, Mode::Deploy, 11).export_store(11);
    auto b = build_model<float>(cfg, Mode::Deploy, 11).export_store(11);
    auto c = build_model<float>(cfg, Mode::Deploy, 12).export_store(12);
    const auto abytes = a.serialize();
    EXPECT_EQ(abytes, b.serialize());
    EXPECT_NE(abytes, c.serialize());
}
