// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Criteria 1-6 drive the library's check suite at full case counts;
// criterion 7 exercises the installed CLI end to end; criterion 8 validates
// the evaluation metrics against hand-computed fixtures.

#include <chrono>
#include <cstdio>
#include <daponet/daponet.hpp>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

namespace fs = std::filesystem;
using namespace daponet;
using nlohmann::json;

namespace {

constexpr std::uint64_t kSeed = 2024;
int failures = 0;

void criterion(int number, const std::string& what, double limit_s,
               const std::function<std::pair<bool, std::string>()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = false;
    std::string detail;
    try {
        std::tie(ok, detail) = body();
    } catch (const std::exception& e) {
        ok = false;
        detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > limit_s) {
        ok = false;
        detail += (detail.empty() ? "" : "; ") + std::string("over time limit");
    }
    if (!ok) ++failures;
    std::printf("%s criterion %d: %s (%s; %.2fs, limit %.0fs)\n", ok ? "PASS" : "FAIL", number,
                what.c_str(), detail.c_str(), secs, limit_s);
    std::fflush(stdout);
}

std::pair<bool, std::string> from_checks(const std::vector<checks::CheckResult>& results) {
    bool ok = true;
    std::string detail;
    for (const auto& r : results) {
        ok = ok && r.pass;
        if (!detail.empty()) detail += ", ";
        detail += r.name + (r.pass ? " ok" : " FAILED [" + r.detail + "]");
    }
    return {ok, detail};
}

struct RunResult {
    int code = -1;
    std::string out;
};

RunResult run_cli(const std::string& args) {
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

std::pair<bool, std::string> cli_determinism() {
    const fs::path dir = fs::temp_directory_path() / "daponet_acceptance";
    fs::remove_all(dir);
    fs::create_directories(dir);

    // textured fixture image, letterboxed 480 -> 640 exercises the padding
    PpmImage img;
    img.width = 640;
    img.height = 480;
    img.data.resize(static_cast<std::size_t>(640 * 480 * 3));
    Rng rng(kSeed);
    for (auto& b : img.data) b = static_cast<unsigned char>(rng.uniform_int(0, 255));
    save_ppm((dir / "scene.ppm").string(), img);

    const std::string wa = (dir / "a.dapw").string(), wb = (dir / "b.dapw").string();
    if (run_cli("init-weights --out \"" + wa + "\" --seed 7").code != 0)
        return {false, "init-weights failed"};
    if (run_cli("init-weights --out \"" + wb + "\" --seed 7").code != 0)
        return {false, "init-weights failed"};
    if (read_file(wa) != read_file(wb)) return {false, "weight containers differ across runs"};

    const std::string infer = "infer --weights \"" + wa + "\" --image \"" +
                              (dir / "scene.ppm").string() + "\" --conf 0.001";
    const auto r1 = run_cli(infer);
    const auto r2 = run_cli(infer);
    if (r1.code != 0 || r2.code != 0) return {false, "infer failed"};
    if (r1.out != r2.out) return {false, "detections differ across runs"};
    const auto dets = json::parse(r1.out);
    for (const auto& d : dets) {
        const auto& b = d["box"];
        if (b[0].get<double>() < 0 || b[1].get<double>() < 0 || b[2].get<double>() > 640 ||
            b[3].get<double>() > 480)
            return {false, "detection box escapes the original image frame"};
    }
    fs::remove_all(dir);
    return {true, "weights byte-identical, detections byte-identical, " +
                      std::to_string(dets.size()) + " boxes all inside the 640x480 frame"};
}

std::pair<bool, std::string> metric_fixtures() {
    // (a) annotations replayed as perfect detections score 1.0 everywhere
    GroundTruthSet gt;
    gt.classes = {"crack", "pothole"};
    GtImage im;
    im.id = 1;
    im.file = "x.ppm";
    im.width = im.height = 100;
    im.boxes.push_back({{10, 10, 30, 30}, 0});
    im.boxes.push_back({{50, 50, 80, 90}, 1});
    gt.images.push_back(im);
    std::vector<std::vector<Detection>> perfect(1);
    for (const auto& b : gt.images[0].boxes) perfect[0].push_back({b.box, b.class_id, 1.0});
    const auto self = evaluate(perfect, gt);
    if (self.map50 != 1.0 || self.map50_95 != 1.0 || self.precision != 1.0 || self.recall != 1.0)
        return {false, "self-evaluation is not exactly 1.0"};

    // (b) hand-computed 3-image fixture: one ground truth per image plus a
    // false positive ranked second, so score order gives TP/FP/TP/TP
    GroundTruthSet gt2;
    gt2.classes = {"crack"};
    for (int i = 0; i < 3; ++i) {
        GtImage im2;
        im2.id = i + 1;
        im2.file = "y" + std::to_string(i) + ".ppm";
        im2.width = im2.height = 200;
        im2.boxes.push_back({{0, 0, 10, 10}, 0});
        gt2.images.push_back(im2);
    }
    std::vector<std::vector<Detection>> preds(3);
    preds[0].push_back({{0, 0, 10, 10}, 0, 0.9});
    preds[0].push_back({{100, 100, 110, 110}, 0, 0.8});
    preds[1].push_back({{0, 0, 10, 10}, 0, 0.7});
    preds[2].push_back({{0, 0, 10, 10}, 0, 0.6});
    const auto hand = evaluate(preds, gt2);
    const double want = (34.0 * 1.0 + 67.0 * 0.75) / 101.0;  // 101-point interpolation
    if (std::abs(hand.map50 - want) > 1e-6)
        return {false, "hand-computed AP mismatch: got " + std::to_string(hand.map50) +
                           ", want " + std::to_string(want)};
    if (hand.precision != 0.75 || hand.recall != 1.0)
        return {false, "hand-computed precision/recall mismatch"};

    // (c) random detections never rank the strict metric above the loose one
    Rng rng(kSeed);
    for (int trial = 0; trial < 25; ++trial) {
        std::vector<std::vector<Detection>> noisy(1);
        for (int i = 0; i < 15; ++i) {
            Detection d;
            const double x = rng.uniform(0.0, 80.0), y = rng.uniform(0.0, 80.0);
            d.box = {x, y, x + rng.uniform(2.0, 40.0), y + rng.uniform(2.0, 40.0)};
            d.class_id = static_cast<int>(rng.uniform_int(0, 1));
            d.score = rng.uniform(0.05, 1.0);
            noisy[0].push_back(d);
        }
        const auto r = evaluate(noisy, gt, 0.0);
        if (r.map50 < r.map50_95 - 1e-12) return {false, "map50 < map50_95 on random input"};
    }
    return {true, "self-eval exact, 101-point fixture to 1e-6, threshold monotonicity held"};
}

}  // namespace

int main() {
    criterion(1, "DOConv fold equals factored forward", 10.0, [] {
        return from_checks({checks::doconv_fold_f32(kSeed), checks::doconv_fold_f64(kSeed)});
    });
    criterion(2, "BatchNorm fold preserves outputs", 5.0,
              [] { return from_checks({checks::bn_fold(kSeed)}); });
    criterion(3, "analytic gradients match finite differences", 30.0, [] {
        std::vector<checks::CheckResult> rs;
        for (const GradOp op : {GradOp::Conv2d, GradOp::Conv1d, GradOp::Matmul, GradOp::Sigmoid,
                                GradOp::Silu, GradOp::Softmax, GradOp::GroupNorm})
            rs.push_back(checks::gradient(op, kSeed));
        return from_checks(rs);
    });
    criterion(4, "ops, NMS and matching agree with brute force", 60.0, [] {
        return from_checks({checks::conv_pool_oracles(kSeed), checks::nms_bruteforce(kSeed),
                            checks::matcher_exhaustive(kSeed)});
    });
    criterion(5, "attention blocks satisfy their algebraic traces", 5.0, [] {
        return from_checks({checks::ela_constant_trace(kSeed), checks::gc_zero_identity(kSeed),
                            checks::gc_softmax_sum(kSeed), checks::pd_partial_identity(kSeed)});
    });
    criterion(6, "efficiency bands and exact accounting hold", 10.0, [] {
        return from_checks(
            {checks::efficiency_band(), checks::accounting_exact(), checks::ablation_direction()});
    });
    criterion(7, "CLI weight init and inference are deterministic", 30.0, cli_determinism);
    criterion(8, "evaluation metrics match hand-computed fixtures", 10.0, metric_fixtures);

    std::printf("acceptance: %d/8 criteria passed\n", 8 - failures);
    return failures == 0 ? 0 : 1;
}
