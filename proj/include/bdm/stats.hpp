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

// Dataset statistics that drive patch selection: class pixel counts and the
// class-balance distribution, per-class difficulty (mean confidence), and
// class-wise spatial prior maps.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ranges>
#include <vector>

#include "bdm/core_types.hpp"

namespace bdm {

namespace detail {

inline const LabelMap& label_of(const LabelMap& m) { return m; }
inline const LabelMap& label_of(const Sample& s) { return s.label; }

}  // namespace detail

template <typename R>
concept LabelRange = std::ranges::input_range<R> && requires(std::ranges::range_reference_t<R> v) {
    { detail::label_of(v) } -> std::same_as<const LabelMap&>;
};

struct PixelCounts {
    std::vector<std::uint64_t> counts;

    std::uint64_t total() const { return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}); }
    /// True when no labeled pixel was seen (empty input or all IGNORE).
    bool empty() const { return total() == 0; }
};

/// Per-class count of non-IGNORE pixels.
template <LabelRange R>
PixelCounts class_pixel_counts(const R& labels, int numClasses) {
    PixelCounts out{std::vector<std::uint64_t>(static_cast<std::size_t>(numClasses), 0)};
    for (const auto& item : labels) {
        for (ClassId v : detail::label_of(item).data()) {
            if (v == kIgnore) continue;
            if (v >= numClasses) throw DataError("class id out of range while counting");
            ++out.counts[v];
        }
    }
    return out;
}

/// Class-balance sampling distribution:
///   w_i = (-log(N_i / sum N))^alpha over classes with N_i > 0, zero elsewhere,
///   normalized to sum to one. A single present class gets probability 1.
inline std::vector<double> class_balance_probs(std::span<const std::uint64_t> counts, double alpha) {
    if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
    std::uint64_t total = 0;
    int present = 0;
    for (auto c : counts) {
        total += c;
        if (c > 0) ++present;
    }
    if (total == 0) throw DataError("class-balance probabilities need at least one labeled pixel");

    std::vector<double> probs(counts.size(), 0.0);
    if (present == 1) {
        for (std::size_t i = 0; i < counts.size(); ++i)
            if (counts[i] > 0) probs[i] = 1.0;
        return probs;
    }

    const double denom = static_cast<double>(total);
    double sum = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] == 0) continue;
        probs[i] = std::pow(-std::log(static_cast<double>(counts[i]) / denom), alpha);
        sum += probs[i];
    }
    for (double& p : probs) p /= sum;
    return probs;
}

struct ClassDifficulty {
    std::vector<double> perClass;  // mean confidence of pixels labeled c
    double globalMean = 0.0;       // mean confidence over all labeled pixels
};

/// Per-class mean confidence over labeled pixels. Absent classes fall back to
/// the global mean.
template <std::ranges::input_range R>
    requires std::same_as<std::ranges::range_value_t<R>, Sample>
ClassDifficulty class_difficulty(const R& dataset, int numClasses) {
    std::vector<double> sum(static_cast<std::size_t>(numClasses), 0.0);
    std::vector<std::uint64_t> n(static_cast<std::size_t>(numClasses), 0);
    for (const Sample& s : dataset) {
        if (s.confidence && (s.confidence->width() != s.width() || s.confidence->height() != s.height()))
            throw DataError("sample '" + s.id + "': confidence plane misaligned with labels");
        for (int y = 0; y < s.height(); ++y) {
            for (int x = 0; x < s.width(); ++x) {
                const ClassId c = s.label(x, y);
                if (c == kIgnore) continue;
                if (c >= numClasses) throw DataError("class id out of range in '" + s.id + "'");
                sum[c] += s.confidence_at(x, y);
                ++n[c];
            }
        }
    }
    ClassDifficulty out;
    const double allSum = std::accumulate(sum.begin(), sum.end(), 0.0);
    const auto allN = std::accumulate(n.begin(), n.end(), std::uint64_t{0});
    out.globalMean = allN > 0 ? allSum / static_cast<double>(allN) : 0.0;
    out.perClass.resize(static_cast<std::size_t>(numClasses));
    for (std::size_t c = 0; c < sum.size(); ++c)
        out.perClass[c] = n[c] > 0 ? sum[c] / static_cast<double>(n[c]) : out.globalMean;
    return out;
}

/// Dataset-level class statistics persisted alongside a bank.
struct ClassStats {
    int numClasses = 0;
    std::vector<std::uint64_t> pixelCounts;
    std::vector<double> difficulty;
    double globalMeanConfidence = 0.0;

    bool empty() const {
        return std::all_of(pixelCounts.begin(), pixelCounts.end(), [](auto c) { return c == 0; });
    }
};

template <std::ranges::input_range R>
    requires std::same_as<std::ranges::range_value_t<R>, Sample>
ClassStats compute_class_stats(const R& dataset, int numClasses) {
    ClassStats s;
    s.numClasses = numClasses;
    s.pixelCounts = class_pixel_counts(dataset, numClasses).counts;
    auto d = class_difficulty(dataset, numClasses);
    s.difficulty = std::move(d.perClass);
    s.globalMeanConfidence = d.globalMean;
    return s;
}

// ---------------------------------------------------------------------------
// Spatial prior
// ---------------------------------------------------------------------------

/// K non-negative maps on a res x res raster over normalized image coordinates.
/// Raster node (i, j) sits at ((i + 0.5) / res, (j + 0.5) / res).
class SpatialPrior {
public:
    static constexpr int kDefaultResolution = 64;

    SpatialPrior() = default;
    SpatialPrior(int numClasses, int resolution, double bandwidth, std::vector<double> values)
        : numClasses_(numClasses), resolution_(resolution), bandwidth_(bandwidth),
          values_(std::move(values)) {
        if (numClasses < 1 || resolution < 1) throw DataError("invalid spatial prior shape");
        if (values_.size() != static_cast<std::size_t>(numClasses) * resolution * resolution)
            throw DataError("spatial prior raster size does not match K*res*res");
        for (double v : values_)
            if (!(v >= 0.0) || !std::isfinite(v)) throw DataError("spatial prior has a negative value");
    }

    int num_classes() const noexcept { return numClasses_; }
    int resolution() const noexcept { return resolution_; }
    double bandwidth() const noexcept { return bandwidth_; }
    std::span<const double> values() const noexcept { return values_; }

    double node(int cls, int ix, int iy) const noexcept {
        return values_[(static_cast<std::size_t>(cls) * resolution_ + iy) * resolution_ + ix];
    }

    /// True when class cls has zero mass everywhere.
    bool is_empty(int cls) const {
        auto plane = class_plane(cls);
        return std::all_of(plane.begin(), plane.end(), [](double v) { return v == 0.0; });
    }

    std::span<const double> class_plane(int cls) const {
        const std::size_t n = static_cast<std::size_t>(resolution_) * resolution_;
        return std::span(values_).subspan(static_cast<std::size_t>(cls) * n, n);
    }

    /// Bilinear lookup at normalized (x, y), clamped to the outermost nodes.
    double at(int cls, double x, double y) const {
        if (cls < 0 || cls >= numClasses_) throw DataError("spatial prior class out of range");
        auto axis = [this](double t, int& i0, double& f) {
            double u = std::clamp(t * resolution_ - 0.5, 0.0, static_cast<double>(resolution_ - 1));
            i0 = std::min(static_cast<int>(std::floor(u)), resolution_ - 1);
            f = u - i0;
        };
        int ix, iy;
        double fx, fy;
        axis(x, ix, fx);
        axis(y, iy, fy);
        const int ix1 = std::min(ix + 1, resolution_ - 1);
        const int iy1 = std::min(iy + 1, resolution_ - 1);
        const double top = node(cls, ix, iy) * (1 - fx) + node(cls, ix1, iy) * fx;
        const double bottom = node(cls, ix, iy1) * (1 - fx) + node(cls, ix1, iy1) * fx;
        return top * (1 - fy) + bottom * fy;
    }

    bool operator==(const SpatialPrior&) const = default;

private:
    int numClasses_ = 0;
    int resolution_ = 0;
    double bandwidth_ = 0.0;
    std::vector<double> values_;
};

/// Class frequency per raster bin (integer accumulation, so dataset order does
/// not matter), smoothed with an isotropic Gaussian of sigma = bandwidth in
/// normalized units. The kernel spans the whole raster, no truncation; outside
/// the raster counts as zero mass.
template <LabelRange R>
SpatialPrior build_spatial_prior(const R& labels, int numClasses, double bandwidth,
                                 int resolution = SpatialPrior::kDefaultResolution) {
    if (!(bandwidth >= 0.0)) throw ConfigError("bandwidth must be >= 0");
    if (resolution < 1) throw ConfigError("prior resolution must be >= 1");
    const std::size_t bins = static_cast<std::size_t>(resolution) * resolution;

    std::vector<std::uint64_t> classCount(static_cast<std::size_t>(numClasses) * bins, 0);
    std::vector<std::uint64_t> binTotal(bins, 0);
    std::size_t seen = 0;
    for (const auto& item : labels) {
        const LabelMap& lm = detail::label_of(item);
        ++seen;
        const int w = lm.width(), h = lm.height();
        std::vector<int> colBin(static_cast<std::size_t>(w));
        for (int x = 0; x < w; ++x)
            colBin[x] = std::min(resolution - 1, static_cast<int>((2LL * x + 1) * resolution / (2LL * w)));
        for (int y = 0; y < h; ++y) {
            const int by = std::min(resolution - 1, static_cast<int>((2LL * y + 1) * resolution / (2LL * h)));
            for (int x = 0; x < w; ++x) {
                const std::size_t b = static_cast<std::size_t>(by) * resolution + colBin[x];
                ++binTotal[b];
                const ClassId c = lm(x, y);
                if (c == kIgnore) continue;
                if (c >= numClasses) throw DataError("class id out of range in spatial prior input");
                ++classCount[static_cast<std::size_t>(c) * bins + b];
            }
        }
    }
    if (seen == 0) throw DataError("spatial prior needs at least one label map");

    std::vector<double> freq(classCount.size(), 0.0);
    for (std::size_t c = 0; c < static_cast<std::size_t>(numClasses); ++c)
        for (std::size_t b = 0; b < bins; ++b)
            if (binTotal[b] > 0)
                freq[c * bins + b] =
                    static_cast<double>(classCount[c * bins + b]) / static_cast<double>(binTotal[b]);

    const double sigma = bandwidth * resolution;
    if (sigma == 0.0) return SpatialPrior(numClasses, resolution, bandwidth, std::move(freq));

    std::vector<double> kernel(static_cast<std::size_t>(2 * resolution - 1));
    for (int d = -(resolution - 1); d <= resolution - 1; ++d)
        kernel[static_cast<std::size_t>(d + resolution - 1)] = std::exp(-0.5 * d * d / (sigma * sigma));

    std::vector<double> out(freq.size(), 0.0);
    std::vector<double> tmp(bins);
    for (std::size_t c = 0; c < static_cast<std::size_t>(numClasses); ++c) {
        const double* src = freq.data() + c * bins;
        double* dst = out.data() + c * bins;
        for (int y = 0; y < resolution; ++y)
            for (int x = 0; x < resolution; ++x) {
                double acc = 0.0;
                for (int sx = 0; sx < resolution; ++sx)
                    acc += src[y * resolution + sx] * kernel[static_cast<std::size_t>(x - sx + resolution - 1)];
                tmp[static_cast<std::size_t>(y) * resolution + x] = acc;
            }
        for (int y = 0; y < resolution; ++y)
            for (int x = 0; x < resolution; ++x) {
                double acc = 0.0;
                for (int sy = 0; sy < resolution; ++sy)
                    acc += tmp[static_cast<std::size_t>(sy) * resolution + x] *
                           kernel[static_cast<std::size_t>(y - sy + resolution - 1)];
                dst[y * resolution + x] = acc;
            }
    }
    return SpatialPrior(numClasses, resolution, bandwidth, std::move(out));
}

}  // namespace bdm
