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

// Diagnostics: how many supervised pixels of each class the pasted patches
// contribute, compared against a uniform-random patch choice, plus simple
// rendered figures.

#pragma once

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "bdm/core_types.hpp"
#include "bdm/png_io.hpp"

namespace bdm {

struct SupervisionTally {
    std::vector<std::uint64_t> selected;  // pasted pixels per class, configured selection
    std::vector<std::uint64_t> baseline;  // pasted pixels per class, uniform-random selection
    std::size_t records = 0;

    explicit SupervisionTally(int numClasses = 0)
        : selected(static_cast<std::size_t>(numClasses), 0), baseline(static_cast<std::size_t>(numClasses), 0) {}

    static double share(const std::vector<std::uint64_t>& v, int cls) {
        std::uint64_t total = 0;
        for (auto x : v) total += x;
        return total == 0 ? 0.0 : static_cast<double>(v[static_cast<std::size_t>(cls)]) / static_cast<double>(total);
    }
};

/// CSV with one row per class. Shares are printed with 6 decimals.
inline std::string supervision_csv(const SupervisionTally& t, const std::vector<std::uint64_t>& sourceCounts) {
    std::ostringstream os;
    os << "class,selected_pixels,selected_share,baseline_pixels,baseline_share,source_pixels,source_share\n";
    os << std::fixed << std::setprecision(6);
    for (std::size_t c = 0; c < t.selected.size(); ++c) {
        const int ci = static_cast<int>(c);
        os << c << ',' << t.selected[c] << ',' << SupervisionTally::share(t.selected, ci) << ',' << t.baseline[c]
           << ',' << SupervisionTally::share(t.baseline, ci) << ',';
        if (c < sourceCounts.size())
            os << sourceCounts[c] << ',' << SupervisionTally::share(sourceCounts, ci);
        else
            os << ",";
        os << '\n';
    }
    return os.str();
}

/// Grouped bar chart of per-class shares: selected (class color) next to
/// baseline (gray). Bar heights are linear in share.
inline Image render_histogram(const SupervisionTally& t, int barWidth = 6, int height = 160) {
    const int k = static_cast<int>(t.selected.size());
    const int group = 2 * barWidth + barWidth;
    Image img(std::max(1, k * group + barWidth), height + 2, 255);
    double peak = 0.0;
    for (int c = 0; c < k; ++c)
        peak = std::max({peak, SupervisionTally::share(t.selected, c), SupervisionTally::share(t.baseline, c)});
    auto bar = [&](int x0, double share, std::array<std::uint8_t, 3> rgb) {
        const int h = peak > 0.0 ? static_cast<int>(std::lround(share / peak * height)) : 0;
        for (int y = height + 1 - h; y <= height; ++y)
            for (int x = x0; x < x0 + barWidth; ++x) std::copy(rgb.begin(), rgb.end(), img.pixel(x, y));
    };
    for (int c = 0; c < k; ++c) {
        const int x0 = barWidth + c * group;
        bar(x0, SupervisionTally::share(t.selected, c), label_color(static_cast<ClassId>(c)));
        bar(x0 + barWidth, SupervisionTally::share(t.baseline, c), {160, 160, 160});
    }
    for (int x = 0; x < img.width(); ++x) std::fill_n(img.pixel(x, height + 1), 3, std::uint8_t{0});
    return img;
}

inline Image colorize(const LabelMap& label) {
    Image out(label.width(), label.height());
    for (int y = 0; y < label.height(); ++y)
        for (int x = 0; x < label.width(); ++x) {
            const auto rgb = label_color(label(x, y));
            std::copy(rgb.begin(), rgb.end(), out.pixel(x, y));
        }
    return out;
}

/// Tiles equally sized images left to right with a 2 px white gutter.
inline Image hstack(const std::vector<Image>& tiles) {
    if (tiles.empty()) return {};
    const int h = tiles.front().height();
    int w = 0;
    for (const auto& t : tiles) {
        if (t.height() != h) throw DataError("composite tiles differ in height");
        w += t.width() + 2;
    }
    Image out(w - 2, h, 255);
    int x0 = 0;
    for (const auto& t : tiles) {
        for (int y = 0; y < h; ++y)
            std::copy_n(t.pixel(0, y), static_cast<std::size_t>(t.width()) * 3, out.pixel(x0, y));
        x0 += t.width() + 2;
    }
    return out;
}

inline Image vstack(const Image& top, const Image& bottom) {
    if (top.width() != bottom.width()) throw DataError("composite rows differ in width");
    Image out(top.width(), top.height() + bottom.height() + 2, 255);
    std::copy(top.data().begin(), top.data().end(), out.data().begin());
    std::copy(bottom.data().begin(), bottom.data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(top.data().size() + 2ull * top.width() * 3));
    return out;
}

/// Original / cut / mixed; images on the top row, colorized labels below.
inline Image composite(const Sample& original, const Sample& cut, const Image& mixedImage, const LabelMap& mixedLabel) {
    return vstack(hstack({original.image, cut.image, mixedImage}),
                  hstack({colorize(original.label), colorize(cut.label), colorize(mixedLabel)}));
}

}  // namespace bdm
