#pragma once

// PPM (P6) image I/O, letterbox preprocessing and the inverse coordinate
// mapping, plus rectangle drawing for annotated output images.

#include <cctype>

#include "detect.hpp"

namespace daponet {

struct PpmImage {
    std::int64_t width = 0, height = 0;
    std::vector<std::uint8_t> data;  // RGB interleaved, row-major

    std::uint8_t& px(std::int64_t y, std::int64_t x, int ch) {
        return data[static_cast<std::size_t>((y * width + x) * 3 + ch)];
    }
    std::uint8_t px(std::int64_t y, std::int64_t x, int ch) const {
        return data[static_cast<std::size_t>((y * width + x) * 3 + ch)];
    }
};

namespace detail {

// Reads one whitespace-delimited header token, skipping '#' comments.
inline std::string ppm_token(const std::string& bytes, std::size_t& pos) {
    while (pos < bytes.size()) {
        if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
            ++pos;
        } else if (bytes[pos] == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        } else {
            break;
        }
    }
    std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
}

inline std::int64_t ppm_int(const std::string& bytes, std::size_t& pos, const char* what) {
    const std::string tok = ppm_token(bytes, pos);
    if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos)
        throw FormatError(std::string("ppm: malformed header, bad ") + what + " field");
    return std::stoll(tok);
}

}  // namespace detail

inline PpmImage parse_ppm(const std::string& bytes) {
    std::size_t pos = 0;
    if (detail::ppm_token(bytes, pos) != "P6")
        throw FormatError("ppm: malformed header, expected P6 magic");
    PpmImage img;
    img.width = detail::ppm_int(bytes, pos, "width");
    img.height = detail::ppm_int(bytes, pos, "height");
    const std::int64_t maxval = detail::ppm_int(bytes, pos, "maxval");
    if (img.width < 1 || img.height < 1)
        throw FormatError("ppm: malformed header, empty image size");
    if (maxval != 255)
        throw FormatError("ppm: unsupported max value " + std::to_string(maxval) +
                          ", only 8-bit (255) images are handled");
    if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
        throw FormatError("ppm: malformed header, missing separator before pixel data");
    ++pos;  // single whitespace between maxval and payload
    const std::size_t need = static_cast<std::size_t>(img.width * img.height * 3);
    if (bytes.size() - pos < need)
        throw FormatError("ppm: truncated payload, have " + std::to_string(bytes.size() - pos) +
                          " bytes, need " + std::to_string(need));
    img.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                    bytes.begin() + static_cast<std::ptrdiff_t>(pos + need));
    return img;
}

inline PpmImage load_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_ppm(bytes);
}

inline void save_ppm(const std::string& path, const PpmImage& img) {
    std::string bytes = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) +
                        "\n255\n";
    bytes.append(reinterpret_cast<const char*>(img.data.data()), img.data.size());
    atomic_write_file(path, bytes);
}

struct LetterboxMeta {
    double scale = 1.0;
    std::int64_t pad_left = 0, pad_top = 0;
    std::int64_t orig_w = 0, orig_h = 0;
};

// Aspect-preserving bilinear resize onto a gray (114/255) canvas, centered
// with the padding split evenly. Output is [1,3,th,tw] in [0,1], RGB.
inline std::pair<Tensor<float>, LetterboxMeta> letterbox(const PpmImage& img, std::int64_t th,
                                                         std::int64_t tw) {
    LetterboxMeta meta;
    meta.orig_w = img.width;
    meta.orig_h = img.height;
    meta.scale = std::min(static_cast<double>(tw) / static_cast<double>(img.width),
                          static_cast<double>(th) / static_cast<double>(img.height));
    const std::int64_t new_w = std::max<std::int64_t>(
        1, static_cast<std::int64_t>(std::llround(static_cast<double>(img.width) * meta.scale)));
    const std::int64_t new_h = std::max<std::int64_t>(
        1, static_cast<std::int64_t>(std::llround(static_cast<double>(img.height) * meta.scale)));
    meta.pad_left = (tw - new_w) / 2;
    meta.pad_top = (th - new_h) / 2;

    Tensor<float> out({1, 3, th, tw});
    const float gray = 114.0f / 255.0f;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = gray;

    const double sx = static_cast<double>(img.width) / static_cast<double>(new_w);
    const double sy = static_cast<double>(img.height) / static_cast<double>(new_h);
    for (std::int64_t oy = 0; oy < new_h; ++oy) {
        const double fy = (static_cast<double>(oy) + 0.5) * sy - 0.5;
        const std::int64_t y0 = std::clamp<std::int64_t>(
            static_cast<std::int64_t>(std::floor(fy)), 0, img.height - 1);
        const std::int64_t y1 = std::min(y0 + 1, img.height - 1);
        const double wy = std::clamp(fy - static_cast<double>(y0), 0.0, 1.0);
        for (std::int64_t ox = 0; ox < new_w; ++ox) {
            const double fx = (static_cast<double>(ox) + 0.5) * sx - 0.5;
            const std::int64_t x0 = std::clamp<std::int64_t>(
                static_cast<std::int64_t>(std::floor(fx)), 0, img.width - 1);
            const std::int64_t x1 = std::min(x0 + 1, img.width - 1);
            const double wx = std::clamp(fx - static_cast<double>(x0), 0.0, 1.0);
            for (int ch = 0; ch < 3; ++ch) {
                const double top = (1.0 - wx) * img.px(y0, x0, ch) + wx * img.px(y0, x1, ch);
                const double bot = (1.0 - wx) * img.px(y1, x0, ch) + wx * img.px(y1, x1, ch);
                out.at(0, ch, meta.pad_top + oy, meta.pad_left + ox) =
                    static_cast<float>(((1.0 - wy) * top + wy * bot) / 255.0);
            }
        }
    }
    return {std::move(out), meta};
}

inline std::pair<Tensor<float>, LetterboxMeta> load_image(const std::string& path,
                                                          std::int64_t th, std::int64_t tw) {
    return letterbox(load_ppm(path), th, tw);
}

// Maps a box from the letterboxed model frame back to original-image pixels,
// clipped to the original bounds.
inline Box unletterbox_box(const Box& b, const LetterboxMeta& meta) {
    const double w = static_cast<double>(meta.orig_w), h = static_cast<double>(meta.orig_h);
    Box o;
    o.x1 = std::clamp((b.x1 - static_cast<double>(meta.pad_left)) / meta.scale, 0.0, w);
    o.y1 = std::clamp((b.y1 - static_cast<double>(meta.pad_top)) / meta.scale, 0.0, h);
    o.x2 = std::clamp((b.x2 - static_cast<double>(meta.pad_left)) / meta.scale, 0.0, w);
    o.y2 = std::clamp((b.y2 - static_cast<double>(meta.pad_top)) / meta.scale, 0.0, h);
    return o;
}

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
};

inline Rgb class_color(int class_id) {
    static const Rgb palette[10] = {{230, 57, 70},   {42, 157, 143}, {69, 123, 157},
                                    {244, 162, 97},  {38, 70, 83},   {231, 111, 81},
                                    {106, 76, 147},  {25, 130, 196}, {138, 201, 38},
                                    {255, 202, 58}};
    return palette[static_cast<std::size_t>(class_id % 10)];
}

inline void draw_box(PpmImage& img, const Box& b, Rgb color, int thickness = 2) {
    const auto clampx = [&](double v) {
        return std::clamp<std::int64_t>(static_cast<std::int64_t>(std::llround(v)), 0,
                                        img.width - 1);
    };
    const auto clampy = [&](double v) {
        return std::clamp<std::int64_t>(static_cast<std::int64_t>(std::llround(v)), 0,
                                        img.height - 1);
    };
    const std::int64_t x1 = clampx(b.x1), x2 = clampx(b.x2);
    const std::int64_t y1 = clampy(b.y1), y2 = clampy(b.y2);
    auto put = [&](std::int64_t y, std::int64_t x) {
        if (y < 0 || y >= img.height || x < 0 || x >= img.width) return;
        img.px(y, x, 0) = color.r;
        img.px(y, x, 1) = color.g;
        img.px(y, x, 2) = color.b;
    };
    for (int t = 0; t < thickness; ++t) {
        for (std::int64_t x = x1; x <= x2; ++x) {
            put(y1 + t, x);
            put(y2 - t, x);
        }
        for (std::int64_t y = y1; y <= y2; ++y) {
            put(y, x1 + t);
            put(y, x2 - t);
        }
    }
}

}  // namespace daponet
