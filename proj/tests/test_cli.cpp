#include <gtest/gtest.h>

#include <cstdio>
#include <daponet/image.hpp>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunResult {
    int code = -1;
    std::string out;
};

RunResult run(const std::string& args) {
    const std::string cmd = std::string("\"") + DAPONET_CLI_PATH + "\" " + args + " 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    RunResult r;
    if (pipe == nullptr) return r;
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof(buf), pipe)) r.out.append(buf, n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

class CliTest : public ::testing::Test {
  protected:
    static fs::path dir() { return fs::temp_directory_path() / "daponet_cli_test"; }

    static void SetUpTestSuite() {
        fs::remove_all(dir());
        fs::create_directories(dir());

        // a small gradient image to run the pipeline on
        daponet::PpmImage img;
        img.width = 80;
        img.height = 60;
        img.data.resize(80 * 60 * 3);
        for (std::int64_t y = 0; y < 60; ++y)
            for (std::int64_t x = 0; x < 80; ++x) {
                img.data[(y * 80 + x) * 3 + 0] = static_cast<unsigned char>(x * 3);
                img.data[(y * 80 + x) * 3 + 1] = static_cast<unsigned char>(y * 4);
                img.data[(y * 80 + x) * 3 + 2] = 90;
            }
        daponet::save_ppm((dir() / "scene.ppm").string(), img);

        const auto w = run("init-weights --imgsz 64 --out \"" + (dir() / "w.dapw").string() +
                           "\" --seed 1");
        ASSERT_EQ(w.code, 0) << w.out;
    }

    static void TearDownTestSuite() { fs::remove_all(dir()); }
};

}  // namespace

TEST_F(CliTest, SummaryReportsFrozenTotals) {
    const auto p = (dir() / "summary.json").string();
    auto r = run("summary --json \"" + p + "\"");
    ASSERT_EQ(r.code, 0);
    auto j = json::parse(read_file(p));
    EXPECT_EQ(j["total_params"].get<std::int64_t>(), 1556575);
    EXPECT_EQ(j["total_flops"].get<std::int64_t>(), 1853224092);
    EXPECT_GT(j["rows"].size(), 10u);

    r = run("summary --imgsz 320 --json \"" + p + "\"");
    ASSERT_EQ(r.code, 0);
    j = json::parse(read_file(p));
    // FLOPs scale with spatial area, params do not
    EXPECT_EQ(j["total_flops"].get<std::int64_t>(), 463508892);
    EXPECT_EQ(j["total_params"].get<std::int64_t>(), 1556575);

    r = run("summary --no-cpda --no-mcd --json \"" + p + "\"");
    ASSERT_EQ(r.code, 0);
    j = json::parse(read_file(p));
    EXPECT_EQ(j["total_params"].get<std::int64_t>(), 3097973);
    EXPECT_EQ(j["total_flops"].get<std::int64_t>(), 3792844800);

    EXPECT_EQ(run("summary --imgsz 100").code, 1);  // not a multiple of 32
    EXPECT_EQ(run("summary --preset nosuch").code, 1);
}

TEST_F(CliTest, CheckSuitePassesAndFaultInjectionTrips) {
    const auto r = run("check --seed 5");
    ASSERT_EQ(r.code, 0) << r.out;
    const auto j = json::parse(r.out);
    EXPECT_GE(j["checks"].size(), 12u);
    EXPECT_EQ(j["failed"].get<int>(), 0);
    for (const auto& c : j["checks"]) EXPECT_TRUE(c["pass"].get<bool>()) << c["name"];

    const auto broken = run("check --seed 5 --fault-inject");
    ASSERT_EQ(broken.code, 2);
    const auto bj = json::parse(broken.out);
    EXPECT_GT(bj["failed"].get<int>(), 0);
    bool doconv_failed = false;
    for (const auto& c : bj["checks"])
        if (c["name"].get<std::string>().find("doconv_fold") != std::string::npos &&
            !c["pass"].get<bool>())
            doconv_failed = true;
    EXPECT_TRUE(doconv_failed);
}

TEST_F(CliTest, InitWeightsIsSeedDeterministic) {
    const auto a = (dir() / "a.dapw").string(), b = (dir() / "b.dapw").string(),
               c = (dir() / "c.dapw").string();
    ASSERT_EQ(run("init-weights --imgsz 64 --out \"" + a + "\" --seed 9").code, 0);
    ASSERT_EQ(run("init-weights --imgsz 64 --out \"" + b + "\" --seed 9").code, 0);
    ASSERT_EQ(run("init-weights --imgsz 64 --out \"" + c + "\" --seed 10").code, 0);
    EXPECT_EQ(read_file(a), read_file(b));
    EXPECT_NE(read_file(a), read_file(c));
}

TEST_F(CliTest, InferProducesDeterministicSortedDetections) {
    const std::string base = "infer --imgsz 64 --weights \"" + (dir() / "w.dapw").string() +
                             "\" --image \"" + (dir() / "scene.ppm").string() + "\"";
    const auto r = run(base);
    ASSERT_EQ(r.code, 0) << r.out;
    const auto dets = json::parse(r.out);
    ASSERT_TRUE(dets.is_array());
    double prev = 1.0;
    for (const auto& d : dets) {
        const double score = d["score"].get<double>();
        EXPECT_LE(score, prev);
        prev = score;
        const auto& box = d["box"];
        EXPECT_GE(box[0].get<double>(), 0.0);
        EXPECT_GE(box[1].get<double>(), 0.0);
        EXPECT_LE(box[2].get<double>(), 80.0);
        EXPECT_LE(box[3].get<double>(), 60.0);
        const int cls = d["class"].get<int>();
        EXPECT_GE(cls, 0);
        EXPECT_LT(cls, 7);
        EXPECT_EQ(d["class_name"].get<std::string>(), "class" + std::to_string(cls));
    }
    EXPECT_EQ(run(base).out, r.out);

    // annotated image output lands next to the JSON
    const auto out_img = (dir() / "annotated.ppm").string();
    ASSERT_EQ(run(base + " --conf 0.4 --out-image \"" + out_img + "\"").code, 0);
    EXPECT_TRUE(fs::exists(out_img));
}

TEST_F(CliTest, InferRejectsMismatchedConfigAndBadInputs) {
    const std::string w = (dir() / "w.dapw").string();
    const std::string img = (dir() / "scene.ppm").string();
    // weights carry nc=7; asking for nc=5 must fail the fingerprint gate
    EXPECT_EQ(run("infer --imgsz 64 --nc 5 --weights \"" + w + "\" --image \"" + img + "\"").code,
              1);
    // garbage image fails as a format problem
    std::ofstream(dir() / "bad.ppm") << "this is not a ppm";
    EXPECT_EQ(run("infer --imgsz 64 --weights \"" + w + "\" --image \"" +
                  (dir() / "bad.ppm").string() + "\"")
                  .code,
              3);
    // absent weights fail as an I/O problem
    EXPECT_EQ(run("infer --imgsz 64 --weights \"" + (dir() / "absent.dapw").string() +
                  "\" --image \"" + img + "\"")
                  .code,
              3);
    // CLI-level misuse: missing required options
    EXPECT_EQ(run("infer --imgsz 64").code, 1);
    EXPECT_EQ(run("nosuchcommand").code, 1);
}

TEST_F(CliTest, EvalBypassScoresPerfect) {
    const std::string ann = (dir() / "gt.json").string();
    std::ofstream(ann) << R"({
      "classes": ["crack", "pothole"],
      "images": [
        {"id": 1, "file": "scene.ppm", "width": 80, "height": 60,
         "boxes": [{"x": 4, "y": 4, "w": 20, "h": 12, "class": 0},
                   {"x": 40, "y": 30, "w": 16, "h": 16, "class": 1}]}
      ]
    })";
    const auto res = (dir() / "metrics.json").string();
    const auto r = run("eval --bypass --annotations \"" + ann + "\" --json \"" + res + "\"");
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("map50 1.000000"), std::string::npos);
    EXPECT_NE(r.out.find("map50_95 1.000000"), std::string::npos);
    const auto j = json::parse(read_file(res));
    EXPECT_DOUBLE_EQ(j["precision"].get<double>(), 1.0);
    ASSERT_EQ(j["class_ap"].size(), 2u);
    EXPECT_DOUBLE_EQ(j["class_ap"][0]["ap"][0].get<double>(), 1.0);

    // without --bypass both --weights and --images become mandatory
    EXPECT_EQ(run("eval --annotations \"" + ann + "\"").code, 1);
    // annotations referencing files that are not in the directory
    std::ofstream(dir() / "gt_missing.json") << R"({
      "classes": ["crack"],
      "images": [{"id": 1, "file": "ghost.ppm", "width": 8, "height": 8, "boxes":
        [{"x": 1, "y": 1, "w": 2, "h": 2, "class": 0}]}]
    })";
    EXPECT_EQ(run("eval --imgsz 64 --nc 1 --weights \"" + (dir() / "w.dapw").string() +
                  "\" --images \"" + dir().string() + "\" --annotations \"" +
                  (dir() / "gt_missing.json").string() + "\"")
                  .code,
              3);
    EXPECT_EQ(run("eval --bypass --annotations \"" + (dir() / "nothere.json").string() + "\"").code,
              3);
}

TEST_F(CliTest, BenchReportsOrderedPercentiles) {
    const auto r = run("bench --imgsz 64 --iters 3 --seed 2");
    ASSERT_EQ(r.code, 0) << r.out;
    const auto j = json::parse(r.out);
    EXPECT_EQ(j["iters"].get<int>(), 3);
    EXPECT_GT(j["p50_ms"].get<double>(), 0.0);
    EXPECT_LE(j["p50_ms"].get<double>(), j["p95_ms"].get<double>());
    EXPECT_EQ(run("bench --iters 0").code, 1);
}
