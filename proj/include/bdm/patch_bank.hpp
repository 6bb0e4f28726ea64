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

// Domain-wise patch banks.
//
// Every sample is divided into a W x H grid. Each cell patch is scored by its
// normalized confidence (mean over labeled pixels of confidence minus the
// difficulty of the pixel's class) and filed under every class it contains at
// that cell. Each (cell, class) list is sorted ascending by score and split
// into R equal-count confidence groups, giving W*H*K*R sequences.
//
// The bank holds references and scores only; pixels come from a PatchSource.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bdm/core_types.hpp"
#include "bdm/parallel.hpp"
#include "bdm/rng.hpp"

namespace bdm {

enum class Domain { Source, Target };

inline const char* to_string(Domain d) { return d == Domain::Source ? "source" : "target"; }

/// One grid cell cut out of a sample.
struct Patch {
    std::string sampleId;
    int cellIndex = 0;
    Rect rect;
    Image imageCrop;
    LabelMap labelCrop;
    ConfidenceMap confidenceCrop;
    double normConf = 0.0;
    std::vector<ClassId> classesPresent;  // ascending
};

/// Pixel payload pasted into a cut cell.
struct PatchCrop {
    Image image;
    LabelMap label;
};

/// A bank entry: where the patch came from, its score and its class histogram.
struct PatchRecord {
    std::string sampleId;
    int cellIndex = 0;
    double normConf = 0.0;
    std::vector<std::pair<ClassId, std::uint32_t>> classPixels;  // ascending class id, count > 0
    std::string cropKey;                                         // content address of the crop

    bool operator==(const PatchRecord&) const = default;
};

template <typename S>
concept PatchSource = requires(const S& s, const PatchRecord& r) {
    { s.crop(r) } -> std::convertible_to<PatchCrop>;
};

namespace detail {

inline Image crop_image(const Image& img, const Rect& r) {
    Image out(r.width, r.height);
    for (int y = 0; y < r.height; ++y)
        std::copy_n(img.pixel(r.x, r.y + y), static_cast<std::size_t>(r.width) * Image::kChannels,
                    out.pixel(0, y));
    return out;
}

template <typename T>
Plane<T> crop_plane(const Plane<T>& p, const Rect& r) {
    Plane<T> out(r.width, r.height);
    for (int y = 0; y < r.height; ++y)
        for (int x = 0; x < r.width; ++x) out(x, y) = p(r.x + x, r.y + y);
    return out;
}

inline std::string hex64(std::uint64_t v) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = kDigits[v & 0xF];
    return s;
}

}  // namespace detail

/// Content address of a crop: FNV-1a over dimensions, RGB bytes and label bytes.
inline std::string crop_key(const Image& image, const LabelMap& label) {
    const std::array<std::int32_t, 2> dims{image.width(), image.height()};
    std::uint64_t h = fnv1a64({reinterpret_cast<const unsigned char*>(dims.data()), sizeof dims});
    h = fnv1a64(image.data(), h);
    h = fnv1a64(label.data(), h);
    return detail::hex64(h);
}

/// W*H raw patches of one sample, row-major cell order.
inline std::vector<Patch> divide(const Sample& sample, const GridSpec& grid) {
    if (sample.image.width() != sample.width() || sample.image.height() != sample.height())
        throw DataError("sample '" + sample.id + "': image and label dimensions differ");
    if (sample.width() < grid.cols() || sample.height() < grid.rows())
        throw DataError("sample '" + sample.id + "' is smaller than one grid cell");
    if (sample.width() != grid.image_width() || sample.height() != grid.image_height())
        throw DataError("sample '" + sample.id + "' does not match the grid's image size");

    std::vector<Patch> out;
    out.reserve(static_cast<std::size_t>(grid.cell_count()));
    for (int i = 0; i < grid.cell_count(); ++i) {
        Patch p;
        p.sampleId = sample.id;
        p.cellIndex = i;
        p.rect = grid.cell_rect(i);
        p.imageCrop = detail::crop_image(sample.image, p.rect);
        p.labelCrop = detail::crop_plane(sample.label, p.rect);
        p.confidenceCrop = sample.confidence ? detail::crop_plane(*sample.confidence, p.rect)
                                             : ConfidenceMap(p.rect.width, p.rect.height, 1.0f);
        std::array<bool, 256> seen{};
        for (ClassId v : p.labelCrop.data())
            if (v != kIgnore) seen[v] = true;
        for (int c = 0; c < 256; ++c)
            if (seen[static_cast<std::size_t>(c)]) p.classesPresent.push_back(static_cast<ClassId>(c));
        out.push_back(std::move(p));
    }
    return out;
}

inline constexpr double kEmptyPatchScore = -1.0;

/// Mean over labeled pixels of (confidence - difficulty[label]); -1 when the
/// patch has no labeled pixel.
inline double normalized_confidence(const LabelMap& label, const ConfidenceMap& confidence,
                                    std::span<const double> difficulty) {
    double sum = 0.0;
    std::size_t n = 0;
    auto labels = label.data();
    auto confs = confidence.data();
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const ClassId c = labels[i];
        if (c == kIgnore) continue;
        if (c >= difficulty.size()) throw DataError("no difficulty score for class " + std::to_string(c));
        sum += static_cast<double>(confs[i]) - difficulty[c];
        ++n;
    }
    return n == 0 ? kEmptyPatchScore : sum / static_cast<double>(n);
}

inline double normalized_confidence(const Patch& patch, std::span<const double> difficulty) {
    return normalized_confidence(patch.labelCrop, patch.confidenceCrop, difficulty);
}

/// Equal-count split of n items into r groups; the first n % r groups get one extra.
inline std::vector<std::size_t> group_sizes(std::size_t n, int r) {
    std::vector<std::size_t> sizes(static_cast<std::size_t>(r), n / static_cast<std::size_t>(r));
    for (std::size_t g = 0; g < n % static_cast<std::size_t>(r); ++g) ++sizes[g];
    return sizes;
}

class PatchBank {
public:
    PatchBank() = default;

    /// Assembles a bank from scored records: files each record under every
    /// class it contains, then sorts and splits per (cell, class).
    PatchBank(Domain domain, GridSpec grid, int numClasses, int numGroups,
              std::vector<double> difficulty, std::vector<PatchRecord> patches)
        : domain_(domain), grid_(grid), numClasses_(numClasses), numGroups_(numGroups),
          difficulty_(std::move(difficulty)), patches_(std::move(patches)) {
        if (numClasses < 1 || numClasses > kMaxClasses) throw ConfigError("class count out of range");
        if (numGroups < 1) throw ConfigError("confidence group count must be >= 1");
        finalize();
    }

    Domain domain() const noexcept { return domain_; }
    const GridSpec& grid() const noexcept { return grid_; }
    int num_classes() const noexcept { return numClasses_; }
    int num_groups() const noexcept { return numGroups_; }
    const std::vector<double>& difficulty() const noexcept { return difficulty_; }
    const std::vector<PatchRecord>& patches() const noexcept { return patches_; }
    const PatchRecord& patch(std::uint32_t index) const { return patches_.at(index); }

    std::size_t sequence_count() const noexcept { return sequences_.size(); }

    std::size_t sequence_index(int cell, int cls, int group) const {
        if (cell < 0 || cell >= grid_.cell_count() || cls < 0 || cls >= numClasses_ || group < 0 ||
            group >= numGroups_)
            throw DataError("bank query out of range: cell " + std::to_string(cell) + ", class " +
                            std::to_string(cls) + ", group " + std::to_string(group));
        return (static_cast<std::size_t>(cell) * numClasses_ + cls) * numGroups_ + group;
    }

    /// Stored sequence (possibly empty) of patch indices, ascending by score.
    std::span<const std::uint32_t> query(int cell, int cls, int group) const {
        return sequences_[sequence_index(cell, cls, group)];
    }

    /// Score of the first patch of groups 1..R-1 for (cell, class); NaN for an empty group.
    std::span<const double> group_boundaries(int cell, int cls) const {
        const std::size_t base = sequence_index(cell, cls, 0) / numGroups_ * (numGroups_ - 1);
        return std::span(boundaries_).subspan(base, static_cast<std::size_t>(numGroups_ - 1));
    }

    std::size_t non_empty_sequence_count() const {
        return static_cast<std::size_t>(std::count_if(sequences_.begin(), sequences_.end(),
                                                      [](const auto& s) { return !s.empty(); }));
    }

    std::size_t total_memberships() const {
        std::size_t n = 0;
        for (const auto& s : sequences_) n += s.size();
        return n;
    }

    bool operator==(const PatchBank& o) const {
        return domain_ == o.domain_ && grid_ == o.grid_ && numClasses_ == o.numClasses_ &&
               numGroups_ == o.numGroups_ && difficulty_ == o.difficulty_ && patches_ == o.patches_ &&
               sequences_ == o.sequences_;
    }

private:
    void finalize() {
        const std::size_t cellClass = static_cast<std::size_t>(grid_.cell_count()) * numClasses_;
        std::vector<std::vector<std::uint32_t>> lists(cellClass);
        for (std::uint32_t i = 0; i < patches_.size(); ++i) {
            const auto& p = patches_[i];
            if (p.cellIndex < 0 || p.cellIndex >= grid_.cell_count())
                throw DataError("patch cell index out of range");
            for (auto [cls, count] : p.classPixels) {
                if (cls >= numClasses_) throw DataError("patch class id out of range");
                lists[static_cast<std::size_t>(p.cellIndex) * numClasses_ + cls].push_back(i);
            }
        }

        sequences_.assign(cellClass * numGroups_, {});
        boundaries_.assign(cellClass * (numGroups_ - 1), std::numeric_limits<double>::quiet_NaN());
        for (std::size_t cc = 0; cc < cellClass; ++cc) {
            auto& list = lists[cc];
            // Stable: ties keep insertion (dataset) order.
            std::stable_sort(list.begin(), list.end(), [this](std::uint32_t a, std::uint32_t b) {
                return patches_[a].normConf < patches_[b].normConf;
            });
            const auto sizes = group_sizes(list.size(), numGroups_);
            std::size_t offset = 0;
            for (int g = 0; g < numGroups_; ++g) {
                auto& seq = sequences_[cc * numGroups_ + g];
                seq.assign(list.begin() + static_cast<std::ptrdiff_t>(offset),
                           list.begin() + static_cast<std::ptrdiff_t>(offset + sizes[g]));
                if (g > 0 && !seq.empty())
                    boundaries_[cc * (numGroups_ - 1) + g - 1] = patches_[seq.front()].normConf;
                offset += sizes[g];
            }
        }
    }

    Domain domain_ = Domain::Source;
    GridSpec grid_;
    int numClasses_ = 0;
    int numGroups_ = 1;
    std::vector<double> difficulty_;
    std::vector<PatchRecord> patches_;
    std::vector<std::vector<std::uint32_t>> sequences_;
    std::vector<double> boundaries_;
};

/// Record for one divided patch; patches without labeled pixels are dropped by build_bank.
inline PatchRecord make_record(const Patch& p, std::span<const double> difficulty) {
    PatchRecord r;
    r.sampleId = p.sampleId;
    r.cellIndex = p.cellIndex;
    r.normConf = normalized_confidence(p, difficulty);
    std::array<std::uint32_t, 256> hist{};
    for (ClassId v : p.labelCrop.data())
        if (v != kIgnore) ++hist[v];
    for (int c = 0; c < 256; ++c)
        if (hist[static_cast<std::size_t>(c)] > 0)
            r.classPixels.emplace_back(static_cast<ClassId>(c), hist[static_cast<std::size_t>(c)]);
    r.cropKey = crop_key(p.imageCrop, p.labelCrop);
    return r;
}

/// Divides and scores every sample (in parallel over samples when jobs > 1),
/// then files patches deterministically in dataset order.
inline PatchBank build_bank(std::span<const Sample> dataset, int gridCols, int gridRows,
                            int numClasses, int numGroups, std::span<const double> difficulty,
                            Domain domain = Domain::Source, int jobs = 1) {
    if (dataset.empty()) throw DataError("cannot build a patch bank from an empty dataset");
    if (static_cast<int>(difficulty.size()) != numClasses)
        throw ConfigError("difficulty must have one entry per class");
    const GridSpec grid =
        GridSpec::for_image(dataset.front().width(), dataset.front().height(), gridCols, gridRows);

    std::vector<std::vector<PatchRecord>> perSample(dataset.size());
    parallel_for(dataset.size(), jobs, [&](std::size_t i) {
        const Sample& s = dataset[i];
        require_valid(s, numClasses);
        for (const Patch& p : divide(s, grid)) {
            if (p.classesPresent.empty()) continue;
            perSample[i].push_back(make_record(p, difficulty));
        }
    });

    std::vector<PatchRecord> records;
    for (auto& v : perSample)
        for (auto& r : v) records.push_back(std::move(r));
    return PatchBank(domain, grid, numClasses, numGroups,
                     std::vector<double>(difficulty.begin(), difficulty.end()), std::move(records));
}

/// Serves crops straight from in-memory samples.
class DatasetPatchSource {
public:
    DatasetPatchSource(std::span<const Sample> samples, GridSpec grid) : samples_(samples), grid_(grid) {
        for (std::size_t i = 0; i < samples.size(); ++i) index_.emplace(samples[i].id, i);
    }

    PatchCrop crop(const PatchRecord& r) const {
        auto it = index_.find(r.sampleId);
        if (it == index_.end()) throw DataError("patch references unknown sample '" + r.sampleId + "'");
        const Sample& s = samples_[it->second];
        const Rect rect = grid_.cell_rect(r.cellIndex);
        return {detail::crop_image(s.image, rect), detail::crop_plane(s.label, rect)};
    }

private:
    std::span<const Sample> samples_;
    GridSpec grid_;
    std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace bdm
