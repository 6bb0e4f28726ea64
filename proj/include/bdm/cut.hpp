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

#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "bdm/core_types.hpp"
#include "bdm/rng.hpp"

namespace bdm {

/// Which cells were examined and which of them were cut.
struct CutPlan {
    std::vector<int> candidates;              // draw order
    std::vector<double> perCellUncertainRatio;  // parallel to candidates
    std::vector<int> cutCells;                // subset of candidates, draw order

    bool operator==(const CutPlan&) const = default;
};

/// Fraction of IGNORE pixels inside rect.
inline double uncertain_ratio(const LabelMap& label, const Rect& rect) {
    if (rect.width <= 0 || rect.height <= 0) throw DataError("uncertain ratio of an empty rect");
    if (rect.x < 0 || rect.y < 0 || rect.x + rect.width > label.width() ||
        rect.y + rect.height > label.height())
        throw DataError("rect lies outside the label map");
    long long ignored = 0;
    for (int y = rect.y; y < rect.y + rect.height; ++y)
        for (int x = rect.x; x < rect.x + rect.width; ++x)
            if (label(x, y) == kIgnore) ++ignored;
    return static_cast<double>(ignored) / static_cast<double>(rect.area());
}

/// Zeroes the image and sets labels to IGNORE in rect. Confidence drops to 0.
inline void cut_region(Sample& sample, const Rect& rect) {
    for (int y = rect.y; y < rect.y + rect.height; ++y) {
        std::fill_n(sample.image.pixel(rect.x, y), static_cast<std::size_t>(rect.width) * Image::kChannels,
                    std::uint8_t{0});
        for (int x = rect.x; x < rect.x + rect.width; ++x) {
            sample.label(x, y) = kIgnore;
            if (sample.confidence) (*sample.confidence)(x, y) = 0.0f;
        }
    }
}

/// Keeps pixels where mask != 0; elsewhere the image goes black and the label IGNORE.
inline Sample random_cutout(const Sample& sample, const Plane<std::uint8_t>& mask) {
    if (mask.width() != sample.width() || mask.height() != sample.height())
        throw DataError("cutout mask dimensions do not match the sample");
    Sample out = sample;
    for (int y = 0; y < sample.height(); ++y)
        for (int x = 0; x < sample.width(); ++x) {
            if (mask(x, y) != 0) continue;
            std::fill_n(out.image.pixel(x, y), Image::kChannels, std::uint8_t{0});
            out.label(x, y) = kIgnore;
            if (out.confidence) (*out.confidence)(x, y) = 0.0f;
        }
    return out;
}

/// Draws `count` distinct cells uniformly (partial Fisher-Yates).
inline std::vector<int> draw_candidate_cells(int cellCount, int count, Rng& rng) {
    if (count < 0 || count > cellCount) throw ConfigError("cut box count must lie in [0, W*H]");
    std::vector<int> cells(static_cast<std::size_t>(cellCount));
    std::iota(cells.begin(), cells.end(), 0);
    for (int i = 0; i < count; ++i) {
        const auto j = i + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(cellCount - i)));
        std::swap(cells[static_cast<std::size_t>(i)], cells[static_cast<std::size_t>(j)]);
    }
    cells.resize(static_cast<std::size_t>(count));
    return cells;
}

struct CutResult {
    Sample masked;
    CutPlan plan;
};

/// Examines numBoxes random grid cells and cuts exactly those whose uncertain
/// ratio exceeds gamma. Everything else stays bit-identical.
inline CutResult confidence_cutout(const Sample& sample, const GridSpec& grid, double gamma,
                                   int numBoxes, Rng& rng) {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
    CutResult out{sample, {}};
    out.plan.candidates = draw_candidate_cells(grid.cell_count(), numBoxes, rng);
    for (int cell : out.plan.candidates) {
        const Rect rect = grid.cell_rect(cell);
        const double ratio = uncertain_ratio(sample.label, rect);
        out.plan.perCellUncertainRatio.push_back(ratio);
        if (ratio > gamma) {
            out.plan.cutCells.push_back(cell);
            cut_region(out.masked, rect);
        }
    }
    return out;
}

}  // namespace bdm
