// Minimal library walkthrough: configure a small model, run a seeded forward
// pass, decode detections, and print the efficiency summary. Uses a reduced
// input size so it finishes in well under a second.

#include <cstdio>

#include <daponet/daponet.hpp>

using namespace daponet;

int main() {
    ModelConfig cfg = preset_svrdd_n();
    cfg.input_h = cfg.input_w = 64;

    Model<float> model = build_model<float>(cfg, Mode::Deploy, /*seed=*/0);

    Rng rng(7);
    const Tensor<float> image = rng.uniform_tensor<float>({1, 3, 64, 64}, 0.0f, 1.0f);
    const auto heads = model.forward(image);
    const auto dets = nms(decode(heads, cfg, /*conf_thr=*/0.10), kDefaultNmsIou);

    std::printf("decoded %zu detections at conf 0.10\n", dets.size());
    for (std::size_t i = 0; i < dets.size() && i < 5; ++i)
        std::printf("  class %d score %.3f box (%.1f, %.1f, %.1f, %.1f)\n", dets[i].class_id,
                    dets[i].score, dets[i].box.x1, dets[i].box.y1, dets[i].box.x2,
                    dets[i].box.y2);

    const SummaryReport rep = summarize(preset_svrdd_n(), Mode::Deploy);
    std::printf("svrdd-n deploy at 640x640: %lld params, %lld FLOPs\n",
                static_cast<long long>(rep.total_params),
                static_cast<long long>(rep.total_flops));
    return 0;
}
