// Copyright 2026 The BDM Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// PNG codecs for the three sample planes and for dataset directories.
//
//   images/<id>.png  8-bit RGB (gray/RGBA/palette inputs are converted)
//   labels/<id>.png  8-bit indexed or gray; pixel value = class id, 255 = IGNORE
//   conf/<id>.png    16-bit gray; confidence = value / 65535 (optional)
//
// Writers emit no time or text chunks, so equal planes give equal bytes.

#pragma once

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "bdm/core_types.hpp"

namespace bdm {

namespace png_detail {

struct Decoded {
    int width = 0;
    int height = 0;
    int bitDepth = 0;
    int colorType = 0;
    int channels = 0;
    std::vector<std::uint8_t> rows;  // tightly packed, big-endian for 16-bit
};

struct ReadCursor {
    const std::vector<std::uint8_t>* bytes;
    std::size_t pos;
};

inline std::vector<std::uint8_t> slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline void spit(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open " + path + " for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw DataError("failed writing " + path);
}

enum class Expand { Rgb8, Raw };

/// Decodes to either 8-bit RGB (any input) or the raw stored samples.
inline Decoded decode(const std::vector<std::uint8_t>& bytes, const std::string& name, Expand mode) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw DataError(name + ": not a PNG file");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw DataError("libpng init failed");
    png_infop info = png_create_info_struct(png);
    Decoded out;
    ReadCursor cursor{&bytes, 0};
    std::vector<png_bytep> rowPtrs;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError(name + ": corrupt PNG");
    }
    png_set_read_fn(png, &cursor, [](png_structp p, png_bytep dst, png_size_t n) {
        auto* c = static_cast<ReadCursor*>(png_get_io_ptr(p));
        if (c->pos + n > c->bytes->size()) png_error(p, "truncated");
        std::copy_n(c->bytes->data() + c->pos, n, dst);
        c->pos += n;
    });
    png_read_info(png, info);
    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    out.colorType = png_get_color_type(png, info);
    out.bitDepth = png_get_bit_depth(png, info);

    if (mode == Expand::Rgb8) {
        if (out.bitDepth == 16) png_set_strip_16(png);
        if (out.colorType == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
        if (out.colorType == PNG_COLOR_TYPE_GRAY && out.bitDepth < 8) png_set_expand_gray_1_2_4_to_8(png);
        if (out.colorType == PNG_COLOR_TYPE_GRAY || out.colorType == PNG_COLOR_TYPE_GRAY_ALPHA)
            png_set_gray_to_rgb(png);
        if (out.colorType & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    } else if (out.bitDepth < 8) {
        png_set_packing(png);
    }
    png_read_update_info(png, info);
    out.channels = png_get_channels(png, info);
    const std::size_t rowBytes = png_get_rowbytes(png, info);
    out.rows.resize(rowBytes * static_cast<std::size_t>(out.height));
    rowPtrs.resize(static_cast<std::size_t>(out.height));
    for (int y = 0; y < out.height; ++y) rowPtrs[y] = out.rows.data() + rowBytes * y;
    png_read_image(png, rowPtrs.data());
    png_read_end(png, nullptr);
    out.bitDepth = png_get_bit_depth(png, info);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

inline std::vector<std::uint8_t> encode(int width, int height, int bitDepth, int colorType,
                                        const std::vector<std::uint8_t>& rows,
                                        const std::vector<png_color>* palette = nullptr) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw DataError("libpng init failed");
    png_infop info = png_create_info_struct(png);
    std::vector<std::uint8_t> out;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DataError("PNG encoding failed");
    }
    png_set_write_fn(
        png, &out,
        [](png_structp p, png_bytep src, png_size_t n) {
            auto* v = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(p));
            v->insert(v->end(), src, src + n);
        },
        [](png_structp) {});
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bitDepth,
                 colorType, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    if (palette) png_set_PLTE(png, info, palette->data(), static_cast<int>(palette->size()));
    png_write_info(png, info);
    const std::size_t rowBytes = height > 0 ? rows.size() / static_cast<std::size_t>(height) : 0;
    for (int y = 0; y < height; ++y) png_write_row(png, const_cast<png_bytep>(rows.data() + rowBytes * y));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

/// Cityscapes train-id colors for the first 19 ids, hashed colors after,
/// black for IGNORE.
inline const std::vector<png_color>& label_palette() {
    static const std::vector<png_color> palette = [] {
        static constexpr std::array<std::array<std::uint8_t, 3>, 19> kCityscapes{{
            {128, 64, 128}, {244, 35, 232}, {70, 70, 70},   {102, 102, 156}, {190, 153, 153},
            {153, 153, 153}, {250, 170, 30}, {220, 220, 0}, {107, 142, 35},  {152, 251, 152},
            {70, 130, 180},  {220, 20, 60},  {255, 0, 0},   {0, 0, 142},     {0, 0, 70},
            {0, 60, 100},    {0, 80, 100},   {0, 0, 230},   {119, 11, 32},
        }};
        std::vector<png_color> p(256);
        for (std::size_t i = 0; i < 256; ++i) {
            if (i < kCityscapes.size()) {
                p[i] = {kCityscapes[i][0], kCityscapes[i][1], kCityscapes[i][2]};
            } else {
                const auto h = static_cast<std::uint32_t>(i * 2654435761u);
                p[i] = {static_cast<png_byte>(h >> 24), static_cast<png_byte>(h >> 16), static_cast<png_byte>(h >> 8)};
            }
        }
        p[kIgnore] = {0, 0, 0};
        return p;
    }();
    return palette;
}

}  // namespace png_detail

inline std::array<std::uint8_t, 3> label_color(ClassId c) {
    const auto& p = png_detail::label_palette()[c];
    return {p.red, p.green, p.blue};
}

inline std::vector<std::uint8_t> encode_rgb_png(const Image& img) {
    return png_detail::encode(img.width(), img.height(), 8, PNG_COLOR_TYPE_RGB,
                              std::vector<std::uint8_t>(img.data().begin(), img.data().end()));
}

inline std::vector<std::uint8_t> encode_label_png(const LabelMap& label) {
    return png_detail::encode(label.width(), label.height(), 8, PNG_COLOR_TYPE_PALETTE,
                              std::vector<std::uint8_t>(label.data().begin(), label.data().end()),
                              &png_detail::label_palette());
}

inline std::uint16_t quantize_confidence(float c) {
    return static_cast<std::uint16_t>(std::lround(std::clamp(c, 0.0f, 1.0f) * 65535.0f));
}

inline std::vector<std::uint8_t> encode_gray16_png(int width, int height, const std::vector<std::uint16_t>& values) {
    std::vector<std::uint8_t> rows(values.size() * 2);
    for (std::size_t i = 0; i < values.size(); ++i) {
        rows[2 * i] = static_cast<std::uint8_t>(values[i] >> 8);
        rows[2 * i + 1] = static_cast<std::uint8_t>(values[i] & 0xFF);
    }
    return png_detail::encode(width, height, 16, PNG_COLOR_TYPE_GRAY, rows);
}

inline std::vector<std::uint8_t> encode_confidence_png(const ConfidenceMap& conf) {
    std::vector<std::uint16_t> q(conf.size());
    std::transform(conf.data().begin(), conf.data().end(), q.begin(), quantize_confidence);
    return encode_gray16_png(conf.width(), conf.height(), q);
}

inline void write_rgb_png(const std::string& path, const Image& img) { png_detail::spit(path, encode_rgb_png(img)); }
inline void write_label_png(const std::string& path, const LabelMap& l) { png_detail::spit(path, encode_label_png(l)); }
inline void write_confidence_png(const std::string& path, const ConfidenceMap& c) {
    png_detail::spit(path, encode_confidence_png(c));
}

inline Image read_rgb_png(const std::string& path) {
    auto d = png_detail::decode(png_detail::slurp(path), path, png_detail::Expand::Rgb8);
    if (d.channels != 3) throw DataError(path + ": could not convert to RGB");
    return Image(d.width, d.height, std::move(d.rows));
}

inline LabelMap read_label_png(const std::string& path) {
    auto d = png_detail::decode(png_detail::slurp(path), path, png_detail::Expand::Raw);
    if (d.channels != 1 || d.bitDepth != 8)
        throw DataError(path + ": label PNG must be 8-bit indexed or grayscale");
    return LabelMap(d.width, d.height, std::move(d.rows));
}

/// 16-bit gray samples as stored (0..65535).
inline Plane<std::uint16_t> read_gray16_png(const std::string& path) {
    auto d = png_detail::decode(png_detail::slurp(path), path, png_detail::Expand::Raw);
    if (d.channels != 1 || d.bitDepth != 16 || d.colorType != PNG_COLOR_TYPE_GRAY)
        throw DataError(path + ": expected a 16-bit grayscale PNG");
    std::vector<std::uint16_t> v(static_cast<std::size_t>(d.width) * d.height);
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = static_cast<std::uint16_t>((d.rows[2 * i] << 8) | d.rows[2 * i + 1]);
    return Plane<std::uint16_t>(d.width, d.height, std::move(v));
}

inline ConfidenceMap read_confidence_png(const std::string& path) {
    const auto raw = read_gray16_png(path);
    ConfidenceMap out(raw.width(), raw.height());
    std::transform(raw.data().begin(), raw.data().end(), out.data().begin(),
                   [](std::uint16_t v) { return static_cast<float>(v) / 65535.0f; });
    return out;
}

// ---------------------------------------------------------------------------
// Dataset directories
// ---------------------------------------------------------------------------

/// Sample ids of a dataset directory: stems of images/*.png, sorted.
inline std::vector<std::string> list_dataset_ids(const std::string& dir) {
    namespace fs = std::filesystem;
    const fs::path images = fs::path(dir) / "images";
    if (!fs::is_directory(images)) throw DataError(dir + ": missing images/ directory");
    std::vector<std::string> ids;
    for (const auto& e : fs::directory_iterator(images))
        if (e.is_regular_file() && e.path().extension() == ".png") ids.push_back(e.path().stem().string());
    std::sort(ids.begin(), ids.end());
    return ids;
}

inline Sample load_sample(const std::string& dir, const std::string& id) {
    namespace fs = std::filesystem;
    const fs::path root(dir);
    Sample s;
    s.id = id;
    s.image = read_rgb_png((root / "images" / (id + ".png")).string());
    const fs::path labelPath = root / "labels" / (id + ".png");
    if (!fs::exists(labelPath)) throw DataError(dir + ": no label for sample '" + id + "'");
    s.label = read_label_png(labelPath.string());
    const fs::path confPath = root / "conf" / (id + ".png");
    if (fs::exists(confPath)) s.confidence = read_confidence_png(confPath.string());
    return s;
}

/// Loads and validates every sample, ordered by id.
inline std::vector<Sample> load_dataset(const std::string& dir, int numClasses) {
    std::vector<Sample> out;
    for (const auto& id : list_dataset_ids(dir)) {
        out.push_back(load_sample(dir, id));
        require_valid(out.back(), numClasses);
    }
    return out;
}

inline void save_sample(const std::string& dir, const Sample& s) {
    namespace fs = std::filesystem;
    const fs::path root(dir);
    write_rgb_png((root / "images" / (s.id + ".png")).string(), s.image);
    write_label_png((root / "labels" / (s.id + ".png")).string(), s.label);
    if (s.confidence) write_confidence_png((root / "conf" / (s.id + ".png")).string(), *s.confidence);
}

}  // namespace bdm
