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

// Pseudo-label generation from per-pixel class probabilities.
//
// The thresholding rule is a stand-in: per-class quantile of max-probability
// capped at 0.9, or one fixed threshold for every class.

#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bdm/core_types.hpp"

namespace bdm {

inline constexpr double kThresholdCap = 0.9;

/// K planes of per-pixel class probabilities, stored plane-major.
class ProbabilityMap {
public:
    ProbabilityMap() = default;
    ProbabilityMap(int width, int height, int numClasses, std::vector<float> planes)
        : width_(width), height_(height), numClasses_(numClasses), data_(std::move(planes)) {
        if (width < 0 || height < 0 || numClasses < 1 || numClasses > kMaxClasses)
            throw DataError("invalid probability map shape");
        if (data_.size() != static_cast<std::size_t>(width) * height * numClasses)
            throw DataError("probability map buffer does not match width*height*K");
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int num_classes() const noexcept { return numClasses_; }
    std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width_) * height_; }

    float at(std::size_t pixel, int cls) const noexcept {
        return data_[static_cast<std::size_t>(cls) * pixel_count() + pixel];
    }
    float at(int x, int y, int cls) const noexcept {
        return at(static_cast<std::size_t>(y) * width_ + x, cls);
    }

    std::span<const float> data() const noexcept { return data_; }

    /// argmax (ties toward the lowest class id) and its probability.
    std::pair<ClassId, float> top(std::size_t pixel) const noexcept {
        int best = 0;
        float bestP = at(pixel, 0);
        for (int c = 1; c < numClasses_; ++c) {
            const float p = at(pixel, c);
            if (p > bestP) {
                best = c;
                bestP = p;
            }
        }
        return {static_cast<ClassId>(best), bestP};
    }

    /// Rejects negative/non-finite entries and per-pixel sums off 1 by more than tol.
    void validate(double tol = 1e-4) const {
        const std::size_t n = pixel_count();
        for (std::size_t p = 0; p < n; ++p) {
            double sum = 0.0;
            for (int c = 0; c < numClasses_; ++c) {
                const float v = at(p, c);
                if (!std::isfinite(v) || v < 0.0f || v > 1.0f)
                    throw DataError("probability map: value out of [0,1] at pixel " +
                                    std::to_string(p) + ", class " + std::to_string(c));
                sum += v;
            }
            if (std::abs(sum - 1.0) > tol)
                throw DataError("probability map: pixel " + std::to_string(p) + " sums to " +
                                std::to_string(sum));
        }
    }

private:
    int width_ = 0;
    int height_ = 0;
    int numClasses_ = 0;
    std::vector<float> data_;
};

struct ThresholdPolicy {
    enum class Mode { Fixed, PerClassQuantile };
    Mode mode = Mode::PerClassQuantile;
    double fixedThreshold = kThresholdCap;
    double quantile = 0.5;

    static ThresholdPolicy fixed(double t) { return {Mode::Fixed, t, 0.5}; }
    static ThresholdPolicy per_class_quantile(double q) { return {Mode::PerClassQuantile, kThresholdCap, q}; }
};

struct PseudoLabelResult {
    LabelMap label;
    ConfidenceMap confidence;
};

namespace detail {

/// Lower nearest-rank quantile: sorted[floor(q * (n - 1))].
inline float lower_quantile(std::vector<float>& values, double q) {
    const auto k = static_cast<std::size_t>(std::floor(q * static_cast<double>(values.size() - 1)));
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end());
    return values[k];
}

}  // namespace detail

/// Per class c: min(0.9, quantile of max-probability over pixels whose argmax is c).
/// Classes never predicted get 0.9.
inline std::vector<double> fit_class_thresholds(std::span<const ProbabilityMap> dataset,
                                                double quantile) {
    if (!(quantile >= 0.0 && quantile <= 1.0)) throw ConfigError("quantile must lie in [0, 1]");
    if (dataset.empty()) throw DataError("cannot fit thresholds on an empty dataset");
    const int k = dataset.front().num_classes();

    std::vector<std::vector<float>> perClass(static_cast<std::size_t>(k));
    for (const auto& prob : dataset) {
        if (prob.num_classes() != k) throw DataError("probability maps disagree on class count");
        for (std::size_t p = 0; p < prob.pixel_count(); ++p) {
            auto [cls, conf] = prob.top(p);
            perClass[cls].push_back(conf);
        }
    }

    std::vector<double> thresholds(static_cast<std::size_t>(k), kThresholdCap);
    for (int c = 0; c < k; ++c) {
        auto& v = perClass[static_cast<std::size_t>(c)];
        if (v.empty()) continue;
        thresholds[static_cast<std::size_t>(c)] =
            std::min(kThresholdCap, static_cast<double>(detail::lower_quantile(v, quantile)));
    }
    return thresholds;
}

/// Labels each pixel with its argmax class when the max probability reaches the
/// class threshold, IGNORE otherwise. Confidence is always the max probability.
/// In quantile mode without explicit thresholds, they are fitted on this map alone.
inline PseudoLabelResult pseudo_label(const ProbabilityMap& prob, const ThresholdPolicy& policy,
                                      std::optional<std::span<const double>> classThresholds = {}) {
    prob.validate();
    const int k = prob.num_classes();

    std::vector<double> thresholds;
    if (classThresholds) {
        if (static_cast<int>(classThresholds->size()) != k)
            throw ConfigError("class threshold count must equal K");
        thresholds.assign(classThresholds->begin(), classThresholds->end());
    } else if (policy.mode == ThresholdPolicy::Mode::Fixed) {
        if (!(policy.fixedThreshold >= 0.0 && policy.fixedThreshold <= 1.0))
            throw ConfigError("fixed threshold must lie in [0, 1]");
        thresholds.assign(static_cast<std::size_t>(k), policy.fixedThreshold);
    } else {
        thresholds = fit_class_thresholds(std::span(&prob, 1), policy.quantile);
    }

    PseudoLabelResult out{LabelMap(prob.width(), prob.height(), kIgnore),
                          ConfidenceMap(prob.width(), prob.height(), 0.0f)};
    auto labels = out.label.data();
    auto confs = out.confidence.data();
    for (std::size_t p = 0; p < prob.pixel_count(); ++p) {
        auto [cls, conf] = prob.top(p);
        confs[p] = conf;
        if (static_cast<double>(conf) >= thresholds[cls]) labels[p] = cls;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Raw binary probability file:
//   bytes 0..3   magic "BDMP"
//   bytes 4..7   uint32 version (1)
//   bytes 8..19  uint32 width, height, K
//   then K planes of width*height float32, row-major. All little-endian.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    const std::array<char, 4> b{static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                                static_cast<char>((v >> 16) & 0xFF),
                                static_cast<char>((v >> 24) & 0xFF)};
    os.write(b.data(), 4);
}

inline std::uint32_t get_u32(const unsigned char* b) {
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace detail

inline constexpr std::uint32_t kProbFileVersion = 1;

inline void write_probability_file(const std::string& path, const ProbabilityMap& prob) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path + " for writing");
    os.write("BDMP", 4);
    detail::put_u32(os, kProbFileVersion);
    detail::put_u32(os, static_cast<std::uint32_t>(prob.width()));
    detail::put_u32(os, static_cast<std::uint32_t>(prob.height()));
    detail::put_u32(os, static_cast<std::uint32_t>(prob.num_classes()));
    for (float v : prob.data()) detail::put_u32(os, std::bit_cast<std::uint32_t>(v));
    if (!os) throw DataError("failed writing " + path);
}

inline ProbabilityMap read_probability_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < 20 || std::memcmp(bytes.data(), "BDMP", 4) != 0)
        throw DataError(path + ": not a probability file");
    if (detail::get_u32(bytes.data() + 4) != kProbFileVersion)
        throw DataError(path + ": unsupported probability file version");
    const auto w = detail::get_u32(bytes.data() + 8);
    const auto h = detail::get_u32(bytes.data() + 12);
    const auto k = detail::get_u32(bytes.data() + 16);
    const std::size_t n = static_cast<std::size_t>(w) * h * k;
    if (k == 0 || k > static_cast<std::uint32_t>(kMaxClasses) || bytes.size() != 20 + 4 * n)
        throw DataError(path + ": truncated or malformed probability file");
    std::vector<float> planes(n);
    for (std::size_t i = 0; i < n; ++i)
        planes[i] = std::bit_cast<float>(detail::get_u32(bytes.data() + 20 + 4 * i));
    return ProbabilityMap(static_cast<int>(w), static_cast<int>(h), static_cast<int>(k),
                          std::move(planes));
}

}  // namespace bdm
