// daponet CLI: model summary, verification checks, weight init, inference,
// evaluation and benchmarking.
//
// Exit codes: 0 success, 1 validation error, 2 check-suite failure,
// 3 I/O or file-format error.

#include <chrono>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include <daponet/daponet.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct ModelOpts {
    std::string preset = "svrdd-n";
    std::string mode = "deploy";
    std::int64_t imgsz = 640;
    std::int64_t nc = -1;
    std::int64_t dfl_bins = -1;
    bool no_cpda = false;
    bool no_mcd = false;
    bool no_sppf = false;
};

void add_model_opts(CLI::App* cmd, ModelOpts& o) {
    cmd->add_option("--preset", o.preset, "Configuration preset: svrdd-n, coco-n or plain")
        ->capture_default_str();
    cmd->add_option("--mode", o.mode, "Weight form: deploy (folded) or train")
        ->capture_default_str();
    cmd->add_option("--imgsz", o.imgsz, "Square input size, multiple of 32")
        ->capture_default_str();
    cmd->add_option("--nc", o.nc, "Override the number of classes");
    cmd->add_option("--dfl-bins", o.dfl_bins, "Override the box-distance bin count");
    cmd->add_flag("--no-cpda", o.no_cpda, "Replace CPDA stages by C2f baseline blocks");
    cmd->add_flag("--no-mcd", o.no_mcd, "Replace MCD downsamplers by strided convs");
    cmd->add_flag("--no-sppf", o.no_sppf, "Drop the SPPF backbone tail");
}

daponet::ModelConfig make_config(const ModelOpts& o) {
    daponet::ModelConfig cfg = daponet::preset_by_name(o.preset);
    cfg.input_h = cfg.input_w = o.imgsz;
    if (o.nc > 0) cfg.num_classes = o.nc;
    if (o.dfl_bins > 0) cfg.dfl_bins = o.dfl_bins;
    if (o.no_cpda) cfg.use_cpda = false;
    if (o.no_mcd) cfg.use_mcd = false;
    if (o.no_sppf) cfg.use_sppf = false;
    cfg.validate();
    return cfg;
}

daponet::Mode make_mode(const ModelOpts& o) {
    if (o.mode == "deploy") return daponet::Mode::Deploy;
    if (o.mode == "train") return daponet::Mode::Train;
    throw daponet::ValueError("unknown --mode '" + o.mode + "' (expected deploy or train)");
}

void emit(const std::string& path, const std::string& text) {
    if (path.empty())
        std::cout << text << "\n";
    else
        daponet::atomic_write_file(path, text + "\n");
}

std::vector<std::string> class_names(const daponet::ModelConfig& cfg,
                                     const std::string& names_path) {
    std::vector<std::string> names;
    if (!names_path.empty()) {
        std::ifstream in(names_path, std::ios::binary);
        if (!in) throw daponet::IoError("cannot open class-name file " + names_path);
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw daponet::FormatError(std::string("class-name file: invalid JSON: ") + e.what());
        }
        if (!j.is_array()) throw daponet::FormatError("class-name file must be a JSON array");
        for (const auto& n : j) names.push_back(n.get<std::string>());
        if (static_cast<std::int64_t>(names.size()) != cfg.num_classes)
            throw daponet::ValueError("class-name file lists " + std::to_string(names.size()) +
                                      " names but the model has " +
                                      std::to_string(cfg.num_classes) + " classes");
    }
    for (std::int64_t c = static_cast<std::int64_t>(names.size()); c < cfg.num_classes; ++c)
        names.push_back("class" + std::to_string(c));
    return names;
}

json detections_json(const std::vector<daponet::Detection>& dets,
                     const std::vector<std::string>& names) {
    json arr = json::array();
    for (const auto& d : dets) {
        json e;
        e["box"] = {d.box.x1, d.box.y1, d.box.x2, d.box.y2};
        e["class"] = d.class_id;
        e["class_name"] = names[static_cast<std::size_t>(d.class_id)];
        e["score"] = d.score;
        arr.push_back(e);
    }
    return arr;
}

// Shared inference pipeline: letterboxed forward, decode, NMS, map back to
// original-image pixels.
std::vector<daponet::Detection> run_inference(const daponet::Model<float>& model,
                                              const daponet::Tensor<float>& input,
                                              const daponet::LetterboxMeta& meta, double conf,
                                              double iou_thr) {
    const auto heads = model.forward(input);
    std::vector<daponet::Detection> dets =
        daponet::nms(daponet::decode(heads, model.cfg, conf), iou_thr);
    std::vector<daponet::Detection> out;
    for (auto d : dets) {
        d.box = daponet::unletterbox_box(d.box, meta);
        if (d.box.x2 - d.box.x1 <= 0 || d.box.y2 - d.box.y1 <= 0) continue;
        out.push_back(d);
    }
    return out;
}

int cmd_summary(const ModelOpts& opts, const std::string& json_path) {
    const daponet::ModelConfig cfg = make_config(opts);
    const daponet::Mode mode = make_mode(opts);
    const daponet::SummaryReport rep = daponet::summarize(cfg, mode);

    std::printf("%-18s %-6s %-14s %12s %16s\n", "name", "type", "output", "params", "flops");
    for (const auto& r : rep.rows) {
        const std::string out_shape = std::to_string(r.out_c) + "x" + std::to_string(r.out_h) +
                                      "x" + std::to_string(r.out_w);
        std::printf("%-18s %-6s %-14s %12lld %16lld\n", r.name.c_str(), r.type.c_str(),
                    out_shape.c_str(), static_cast<long long>(r.params),
                    static_cast<long long>(r.flops));
    }
    std::printf("total (%s, %lldx%lld): params %lld, flops %lld\n",
                daponet::mode_name(mode), static_cast<long long>(cfg.input_h),
                static_cast<long long>(cfg.input_w), static_cast<long long>(rep.total_params),
                static_cast<long long>(rep.total_flops));

    if (!json_path.empty()) {
        json j;
        j["mode"] = daponet::mode_name(mode);
        j["input"] = {cfg.input_h, cfg.input_w};
        j["total_params"] = rep.total_params;
        j["total_flops"] = rep.total_flops;
        j["rows"] = json::array();
        for (const auto& r : rep.rows)
            j["rows"].push_back({{"name", r.name},
                                 {"type", r.type},
                                 {"out", {r.out_c, r.out_h, r.out_w}},
                                 {"params", r.params},
                                 {"flops", r.flops}});
        daponet::atomic_write_file(json_path, j.dump(2) + "\n");
    }
    return 0;
}

int cmd_check(std::uint64_t seed, const std::string& json_path, bool fault_inject) {
    daponet::fault_inject_do_fold() = fault_inject;
    const auto results = daponet::checks::run_all(seed);
    daponet::fault_inject_do_fold() = false;

    int failed = 0;
    json j;
    j["seed"] = seed;
    j["checks"] = json::array();
    for (const auto& r : results) {
        if (!r.pass) ++failed;
        j["checks"].push_back({{"name", r.name},
                               {"pass", r.pass},
                               {"measured", r.measured},
                               {"tolerance", r.tolerance},
                               {"detail", r.detail}});
    }
    j["passed"] = static_cast<int>(results.size()) - failed;
    j["failed"] = failed;
    emit(json_path, j.dump(2));
    if (!json_path.empty())
        std::cout << (failed == 0 ? "all " : "FAILURES: ") << (results.size() - failed) << "/"
                  << results.size() << " checks passed\n";
    return failed == 0 ? 0 : 2;
}

int cmd_init_weights(const ModelOpts& opts, const std::string& out, std::uint64_t seed) {
    const daponet::ModelConfig cfg = make_config(opts);
    const daponet::Mode mode = make_mode(opts);
    daponet::Model<float> m = daponet::build_model<float>(cfg, mode, seed);
    daponet::WeightStore ws = m.export_store(seed);
    ws.save(out);
    std::cout << "wrote " << out << " (" << ws.tensors.size() << " tensors, "
              << ws.element_count(true) << " elements, fingerprint " << ws.fingerprint << ")\n";
    return 0;
}

int cmd_infer(const ModelOpts& opts, const std::string& weights, const std::string& image,
              const std::string& out_json, const std::string& out_image,
              const std::string& names_path, double conf, double iou_thr) {
    const daponet::ModelConfig cfg = make_config(opts);
    const daponet::Mode mode = make_mode(opts);
    const daponet::WeightStore ws = daponet::WeightStore::load(weights);
    daponet::Model<float> model = daponet::Model<float>::build(cfg, mode);
    model.import_store(ws);

    daponet::PpmImage img = daponet::load_ppm(image);
    auto [input, meta] = daponet::letterbox(img, cfg.input_h, cfg.input_w);
    const auto dets = run_inference(model, input, meta, conf, iou_thr);

    const auto names = class_names(cfg, names_path);
    emit(out_json, detections_json(dets, names).dump(2));

    if (!out_image.empty()) {
        for (const auto& d : dets)
            daponet::draw_box(img, d.box, daponet::class_color(d.class_id), 2);
        daponet::save_ppm(out_image, img);
    }
    return 0;
}

int cmd_eval(const ModelOpts& opts, const std::string& weights, const std::string& images_dir,
             const std::string& annotations, double conf, double iou_thr, double score_thr,
             bool bypass, const std::string& json_path) {
    const daponet::GroundTruthSet gt = daponet::load_ground_truth(annotations);
    std::vector<std::vector<daponet::Detection>> preds;

    if (bypass) {
        // Ground truth replayed as perfect detections; exercises the metric
        // path without touching weights or images.
        for (const auto& im : gt.images) {
            std::vector<daponet::Detection> p;
            for (const auto& b : im.boxes) p.push_back({b.box, b.class_id, 1.0});
            preds.push_back(std::move(p));
        }
    } else {
        const daponet::ModelConfig cfg = make_config(opts);
        if (cfg.num_classes != static_cast<std::int64_t>(gt.classes.size()))
            throw daponet::ValueError("model has " + std::to_string(cfg.num_classes) +
                                      " classes but annotations list " +
                                      std::to_string(gt.classes.size()));
        std::string missing;
        for (const auto& im : gt.images) {
            const fs::path p = fs::path(images_dir) / im.file;
            if (!fs::exists(p)) missing += (missing.empty() ? "" : ", ") + p.string();
        }
        if (!missing.empty()) throw daponet::IoError("missing image files: " + missing);

        const daponet::WeightStore ws = daponet::WeightStore::load(weights);
        daponet::Model<float> model = daponet::Model<float>::build(cfg, make_mode(opts));
        model.import_store(ws);
        for (const auto& im : gt.images) {
            auto [input, meta] = daponet::load_image((fs::path(images_dir) / im.file).string(),
                                                     cfg.input_h, cfg.input_w);
            preds.push_back(run_inference(model, input, meta, conf, iou_thr));
        }
    }

    const daponet::EvalResult res = daponet::evaluate(preds, gt, score_thr);
    std::printf("precision %.6f\nrecall %.6f\nmap50 %.6f\nmap50_95 %.6f\n", res.precision,
                res.recall, res.map50, res.map50_95);
    if (!json_path.empty()) {
        json j;
        j["precision"] = res.precision;
        j["recall"] = res.recall;
        j["map50"] = res.map50;
        j["map50_95"] = res.map50_95;
        j["class_ap"] = json::array();
        for (std::size_t c = 0; c < res.class_ap.size(); ++c)
            j["class_ap"].push_back({{"class", gt.classes[c]},
                                     {"gt", res.class_gt[c]},
                                     {"ap", res.class_ap[c]}});
        daponet::atomic_write_file(json_path, j.dump(2) + "\n");
    }
    return 0;
}

int cmd_bench(const ModelOpts& opts, int iters, std::uint64_t seed, double conf, double iou_thr) {
    if (iters < 1) throw daponet::ValueError("--iters must be >= 1");
    const daponet::ModelConfig cfg = make_config(opts);
    daponet::Model<float> model = daponet::build_model<float>(cfg, make_mode(opts), seed);
    daponet::Rng rng(seed + 1);
    const daponet::Tensor<float> x =
        rng.uniform_tensor<float>({1, 3, cfg.input_h, cfg.input_w}, 0.0f, 1.0f);

    auto once = [&]() {
        const auto heads = model.forward(x);
        const auto dets = daponet::nms(daponet::decode(heads, cfg, conf), iou_thr);
        return dets.size();
    };
    once();  // warmup
    std::vector<double> ms;
    for (int i = 0; i < iters; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        once();
        const auto t1 = std::chrono::steady_clock::now();
        ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::vector<double> sorted = ms;
    std::sort(sorted.begin(), sorted.end());
    const auto pct = [&](double q) {
        const std::size_t idx = static_cast<std::size_t>(
            std::ceil(q * static_cast<double>(sorted.size()))) - 1;
        return sorted[std::min(idx, sorted.size() - 1)];
    };
    double mean = 0;
    for (const double v : ms) mean += v;
    mean /= static_cast<double>(ms.size());

    json j;
    j["iters"] = iters;
    j["imgsz"] = cfg.input_h;
    j["mean_ms"] = mean;
    j["p50_ms"] = pct(0.50);
    j["p95_ms"] = pct(0.95);
    std::cout << j.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DAPONet road-damage detector: inference and verification toolkit"};
    app.require_subcommand(1);

    ModelOpts sum_opts;
    std::string sum_json;
    CLI::App* sum = app.add_subcommand("summary", "Per-layer parameter and FLOP report");
    add_model_opts(sum, sum_opts);
    sum->add_option("--json", sum_json, "Also write the report as JSON");

    std::uint64_t check_seed = 0;
    std::string check_json;
    bool fault_inject = false;
    CLI::App* chk = app.add_subcommand("check", "Run the verification suite");
    chk->add_option("--seed", check_seed, "Seed for the randomized checks")
        ->capture_default_str();
    chk->add_option("--json", check_json, "Write the JSON report to a file instead of stdout");
    chk->add_flag("--fault-inject", fault_inject, "")->group("");

    ModelOpts init_opts;
    std::string init_out;
    std::uint64_t init_seed = 0;
    CLI::App* ini = app.add_subcommand("init-weights", "Write a seeded weight container");
    add_model_opts(ini, init_opts);
    ini->add_option("--out", init_out, "Output .dapw path")->required();
    ini->add_option("--seed", init_seed, "Init seed")->capture_default_str();

    ModelOpts infer_opts;
    std::string infer_weights, infer_image, infer_json, infer_out_image, infer_names;
    double infer_conf = daponet::kDefaultConfThr, infer_iou = daponet::kDefaultNmsIou;
    CLI::App* inf = app.add_subcommand("infer", "Detect road damage in one image");
    add_model_opts(inf, infer_opts);
    inf->add_option("--weights", infer_weights, "Weight container path")->required();
    inf->add_option("--image", infer_image, "Input PPM (P6) image")->required();
    inf->add_option("--out-json", infer_json, "Detections JSON path (stdout when omitted)");
    inf->add_option("--out-image", infer_out_image, "Annotated PPM output path");
    inf->add_option("--names", infer_names, "JSON array of class names");
    inf->add_option("--conf", infer_conf, "Confidence threshold")->capture_default_str();
    inf->add_option("--iou", infer_iou, "NMS IoU threshold")->capture_default_str();

    ModelOpts eval_opts;
    std::string eval_weights, eval_images, eval_ann, eval_json;
    double eval_conf = daponet::kDefaultConfThr, eval_iou = daponet::kDefaultNmsIou;
    double eval_score = daponet::kDefaultScoreThr;
    bool eval_bypass = false;
    CLI::App* evl = app.add_subcommand("eval", "Evaluate against annotations");
    add_model_opts(evl, eval_opts);
    evl->add_option("--weights", eval_weights, "Weight container path");
    evl->add_option("--images", eval_images, "Directory holding the annotated images");
    evl->add_option("--annotations", eval_ann, "Annotations JSON path")->required();
    evl->add_option("--conf", eval_conf, "Confidence threshold")->capture_default_str();
    evl->add_option("--iou", eval_iou, "NMS IoU threshold")->capture_default_str();
    evl->add_option("--score-thr", eval_score, "Precision/recall operating threshold")
        ->capture_default_str();
    evl->add_flag("--bypass", eval_bypass, "Score the annotations against themselves");
    evl->add_option("--json", eval_json, "Write metrics (with per-class AP) as JSON");

    ModelOpts bench_opts;
    int bench_iters = 3;
    std::uint64_t bench_seed = 0;
    double bench_conf = daponet::kDefaultConfThr, bench_iou = daponet::kDefaultNmsIou;
    CLI::App* ben = app.add_subcommand("bench", "Time forward + decode + NMS");
    add_model_opts(ben, bench_opts);
    ben->add_option("--iters", bench_iters, "Timed iterations")->capture_default_str();
    ben->add_option("--seed", bench_seed, "Weight and input seed")->capture_default_str();
    ben->add_option("--conf", bench_conf, "Confidence threshold")->capture_default_str();
    ben->add_option("--iou", bench_iou, "NMS IoU threshold")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (sum->parsed()) return cmd_summary(sum_opts, sum_json);
        if (chk->parsed()) return cmd_check(check_seed, check_json, fault_inject);
        if (ini->parsed()) return cmd_init_weights(init_opts, init_out, init_seed);
        if (inf->parsed())
            return cmd_infer(infer_opts, infer_weights, infer_image, infer_json, infer_out_image,
                             infer_names, infer_conf, infer_iou);
        if (evl->parsed()) {
            if (!eval_bypass && (eval_weights.empty() || eval_images.empty()))
                throw daponet::ValueError("eval needs --weights and --images unless --bypass");
            return cmd_eval(eval_opts, eval_weights, eval_images, eval_ann, eval_conf, eval_iou,
                            eval_score, eval_bypass, eval_json);
        }
        if (ben->parsed())
            return cmd_bench(bench_opts, bench_iters, bench_seed, bench_conf, bench_iou);
    } catch (const daponet::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const daponet::FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const daponet::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
