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

// Paste side of bidirectional domain mixup.
//
// For each cut cell a (class, cell location, confidence group) triple is drawn
// with probability proportional to P_CB(class) * P_SC(location) * P_PC(group),
// restricted to the bank's non-empty sequences, and one patch is drawn
// uniformly from that sequence. Source holes are filled from the target bank
// and target holes from the source bank.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bdm/core_types.hpp"
#include "bdm/cut.hpp"
#include "bdm/patch_bank.hpp"
#include "bdm/rng.hpp"
#include "bdm/stats.hpp"

namespace bdm {

using NormalizedPoint = std::pair<double, double>;  // (x, y) in [0,1]^2

struct SelectionWeights {
    std::vector<double> pCB;  // per class
    std::vector<double> pSC;  // per cell location
    std::vector<double> pPC;  // per confidence group, ascending confidence
};

/// Class whose prior is largest at `point`; ties go to the lowest class id.
inline int spatial_argmax_class(const SpatialPrior& prior, NormalizedPoint point) {
    int best = 0;
    double bestV = prior.at(0, point.first, point.second);
    for (int c = 1; c < prior.num_classes(); ++c) {
        const double v = prior.at(c, point.first, point.second);
        if (v > bestV) {
            best = c;
            bestV = v;
        }
    }
    return best;
}

/// P_SC over cell locations: the prior of the selected class evaluated at
/// every cell center, normalized to one. Uniform when that prior is zero at
/// all centers. `forcedClass` overrides the argmax choice.
inline std::vector<double> spatial_continuity_probs(const SpatialPrior& prior, NormalizedPoint cutCenter,
                                                    std::span<const NormalizedPoint> cellCenters,
                                                    std::optional<int> forcedClass = {}) {
    if (cellCenters.empty()) throw DataError("spatial continuity needs at least one cell center");
    const int cls = forcedClass ? *forcedClass : spatial_argmax_class(prior, cutCenter);
    std::vector<double> p(cellCenters.size());
    double sum = 0.0;
    for (std::size_t j = 0; j < cellCenters.size(); ++j) {
        p[j] = prior.at(cls, cellCenters[j].first, cellCenters[j].second);
        sum += p[j];
    }
    if (sum > 0.0) {
        for (double& v : p) v /= sum;
    } else {
        std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(p.size()));
    }
    return p;
}

struct SelectionTriple {
    int cls = 0;
    int cell = 0;
    int group = 0;
    double weight = 0.0;  // unnormalized P_CB * P_SC * P_PC
};

/// The exact categorical distribution select_patch samples from: every
/// non-empty (class, cell, group) sequence with positive product weight.
struct SelectionDistribution {
    std::vector<SelectionTriple> support;
    std::vector<double> cumulative;
    double total = 0.0;

    double probability(std::size_t i) const { return support[i].weight / total; }
};

inline SelectionDistribution selection_distribution(const PatchBank& bank, const SelectionWeights& w) {
    const int k = bank.num_classes();
    const int cells = bank.grid().cell_count();
    const int r = bank.num_groups();
    if (static_cast<int>(w.pCB.size()) != k || static_cast<int>(w.pSC.size()) != cells ||
        static_cast<int>(w.pPC.size()) != r)
        throw ConfigError("selection weights do not match the bank's K, grid or R");

    SelectionDistribution d;
    for (int c = 0; c < k; ++c) {
        if (w.pCB[c] <= 0.0) continue;
        for (int j = 0; j < cells; ++j) {
            if (w.pSC[j] <= 0.0) continue;
            for (int g = 0; g < r; ++g) {
                if (w.pPC[g] <= 0.0 || bank.query(j, c, g).empty()) continue;
                const double weight = w.pCB[c] * w.pSC[j] * w.pPC[g];
                d.total += weight;
                d.support.push_back({c, j, g, weight});
                d.cumulative.push_back(d.total);
            }
        }
    }
    return d;
}

struct Selection {
    int cls = -1;    // -1 when chosen without class conditioning
    int cell = 0;
    int group = -1;  // -1 when chosen without group conditioning
    std::uint32_t patchIndex = 0;
};

inline Selection sample_from(const PatchBank& bank, const SelectionDistribution& d, Rng& rng) {
    if (d.support.empty() || !(d.total > 0.0))
        throw DataError("bank unusable: no non-empty sequence has positive selection weight");
    const double u = rng.uniform01() * d.total;
    auto it = std::upper_bound(d.cumulative.begin(), d.cumulative.end(), u);
    const auto idx = std::min<std::size_t>(static_cast<std::size_t>(it - d.cumulative.begin()),
                                           d.support.size() - 1);
    const SelectionTriple& t = d.support[idx];
    const auto seq = bank.query(t.cell, t.cls, t.group);
    return {t.cls, t.cell, t.group, seq[rng.uniform_index(seq.size())]};
}

/// Draws a triple with probability proportional to P_CB * P_SC * P_PC over
/// non-empty sequences, then a patch uniformly from that sequence.
inline Selection select_patch(const PatchBank& bank, int cutCellIndex, const SelectionWeights& weights,
                              Rng& rng) {
    if (cutCellIndex < 0 || cutCellIndex >= bank.grid().cell_count())
        throw DataError("cut cell index out of range");
    return sample_from(bank, selection_distribution(bank, weights), rng);
}

/// Baseline: any bank patch with equal probability.
inline Selection select_uniform(const PatchBank& bank, Rng& rng) {
    if (bank.patches().empty()) throw DataError("bank unusable: no patches");
    const auto idx = static_cast<std::uint32_t>(rng.uniform_index(bank.patches().size()));
    return {-1, bank.patch(idx).cellIndex, -1, idx};
}

// ---------------------------------------------------------------------------
// Paste
// ---------------------------------------------------------------------------

struct PasteRecord {
    int cutCell = 0;
    int cls = -1;
    int sourceCell = 0;
    int group = -1;
    Domain patchDomain = Domain::Source;
    std::string patchSampleId;
    std::uint32_t patchIndex = 0;
    std::vector<std::pair<ClassId, std::uint32_t>> pastedClassPixels;

    bool operator==(const PasteRecord&) const = default;
};

struct MixedSample {
    std::string originId;
    Domain originDomain = Domain::Source;
    Image image;
    LabelMap label;
    CutPlan plan;
    std::vector<PasteRecord> provenance;  // one per cut cell, plan order

    bool operator==(const MixedSample&) const = default;
};

struct PasteItem {
    PasteRecord record;
    PatchCrop crop;
};

/// Copies each crop into its cut cell; every other pixel is left as in `masked`.
inline MixedSample paste(const Sample& masked, Domain originDomain, const GridSpec& grid,
                         const CutPlan& plan, std::vector<PasteItem> items) {
    if (items.size() != plan.cutCells.size())
        throw InvariantError("paste needs exactly one patch per cut cell");
    MixedSample out{masked.id, originDomain, masked.image, masked.label, plan, {}};
    for (std::size_t i = 0; i < items.size(); ++i) {
        auto& item = items[i];
        const Rect rect = grid.cell_rect(plan.cutCells[i]);
        if (item.crop.image.width() != rect.width || item.crop.image.height() != rect.height ||
            item.crop.label.width() != rect.width || item.crop.label.height() != rect.height)
            throw DataError("patch size " + std::to_string(item.crop.image.width()) + "x" +
                            std::to_string(item.crop.image.height()) + " does not match cell size " +
                            std::to_string(rect.width) + "x" + std::to_string(rect.height));
        for (int y = 0; y < rect.height; ++y) {
            std::copy_n(item.crop.image.pixel(0, y), static_cast<std::size_t>(rect.width) * Image::kChannels,
                        out.image.pixel(rect.x, rect.y + y));
            for (int x = 0; x < rect.width; ++x) out.label(rect.x + x, rect.y + y) = item.crop.label(x, y);
        }
        std::array<std::uint32_t, 256> hist{};
        for (ClassId v : item.crop.label.data())
            if (v != kIgnore) ++hist[v];
        item.record.pastedClassPixels.clear();
        for (int c = 0; c < 256; ++c)
            if (hist[static_cast<std::size_t>(c)] > 0)
                item.record.pastedClassPixels.emplace_back(static_cast<ClassId>(c), hist[static_cast<std::size_t>(c)]);
        item.record.cutCell = plan.cutCells[i];
        out.provenance.push_back(std::move(item.record));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Bidirectional mixing
// ---------------------------------------------------------------------------

/// A bank together with the pixel source its records resolve against.
template <PatchSource S>
struct BankView {
    const PatchBank& bank;
    const S& pixels;
};

/// Dataset-level selection state shared by every pair: P_CB from source
/// counts, the source spatial prior, and the group probabilities.
class Mixer {
public:
    Mixer(const ClassStats& sourceStats, const SpatialPrior& prior, MixConfig config)
        : prior_(prior), config_(std::move(config)) {
        config_.validate();
        if (sourceStats.numClasses != config_.numClasses ||
            static_cast<int>(sourceStats.pixelCounts.size()) != config_.numClasses)
            throw ConfigError("source stats class count does not match the config");
        if (prior.num_classes() != config_.numClasses)
            throw ConfigError("spatial prior class count does not match the config");
        pCB_ = class_balance_probs(sourceStats.pixelCounts, config_.alpha);
    }

    const MixConfig& config() const noexcept { return config_; }
    const std::vector<double>& class_balance() const noexcept { return pCB_; }

    /// Selection weights for one cut cell of a sample laid out on `grid`.
    SelectionWeights weights_for(const Sample& original, const GridSpec& grid, const PatchBank& bank,
                                 int cutCell) const {
        std::vector<NormalizedPoint> centers;
        centers.reserve(static_cast<std::size_t>(bank.grid().cell_count()));
        for (int j = 0; j < bank.grid().cell_count(); ++j) centers.push_back(bank.grid().normalized_center(j));

        std::optional<int> forced;
        if (config_.spatialRule == SpatialClassRule::CutRegionDominant)
            forced = dominant_class(original.label, grid.cell_rect(cutCell));
        return {pCB_, spatial_continuity_probs(prior_, grid.normalized_center(cutCell), centers, forced),
                config_.groupProbs};
    }

    /// Cut `sample`, then fill its holes from `donor`.
    template <PatchSource S>
    MixedSample mix_one(const Sample& sample, Domain sampleDomain, BankView<S> donor, Rng& rng) const {
        require_valid(sample, config_.numClasses);
        const PatchBank& bank = donor.bank;
        if (bank.num_classes() != config_.numClasses || bank.num_groups() != config_.numGroups ||
            bank.grid().cols() != config_.gridCols || bank.grid().rows() != config_.gridRows)
            throw ConfigError("bank K, R or grid does not match the mix config");
        const GridSpec grid = GridSpec::for_image(sample.width(), sample.height(), config_.gridCols,
                                                  config_.gridRows);
        if (!grid.same_layout(bank.grid()))
            throw DataError("sample '" + sample.id + "' cell size does not match the donor bank's patches");

        CutResult cut = confidence_cutout(sample, grid, config_.gamma, config_.numCutBoxes, rng);
        std::vector<PasteItem> items;
        items.reserve(cut.plan.cutCells.size());
        for (int cell : cut.plan.cutCells) {
            Selection sel = config_.selection == SelectionMode::Bdm
                                ? select_patch(bank, cell, weights_for(sample, grid, bank, cell), rng)
                                : select_uniform(bank, rng);
            const PatchRecord& rec = bank.patch(sel.patchIndex);
            PasteRecord pr;
            pr.cls = sel.cls;
            pr.sourceCell = sel.cell;
            pr.group = sel.group;
            pr.patchDomain = bank.domain();
            pr.patchSampleId = rec.sampleId;
            pr.patchIndex = sel.patchIndex;
            items.push_back({std::move(pr), donor.pixels.crop(rec)});
        }
        return paste(cut.masked, sampleDomain, grid, cut.plan, std::move(items));
    }

private:
    static std::optional<int> dominant_class(const LabelMap& label, const Rect& rect) {
        std::array<std::uint64_t, 256> hist{};
        for (int y = rect.y; y < rect.y + rect.height; ++y)
            for (int x = rect.x; x < rect.x + rect.width; ++x)
                if (label(x, y) != kIgnore) ++hist[label(x, y)];
        const auto it = std::max_element(hist.begin(), hist.end());
        if (*it == 0) return std::nullopt;
        return static_cast<int>(it - hist.begin());
    }

    const SpatialPrior& prior_;
    MixConfig config_;
    std::vector<double> pCB_;
};

struct MixedPair {
    MixedSample source;  // source image, target patches
    MixedSample target;  // target image, source patches
};

/// One step of bidirectional mixup. The source sample draws from its own
/// forked stream first, then the target sample from a second one.
template <PatchSource SrcPixels, PatchSource TgtPixels>
MixedPair bdm_mix_pair(const Sample& src, const Sample& tgt, BankView<SrcPixels> srcBank,
                       BankView<TgtPixels> tgtBank, const Mixer& mixer, Rng& rng) {
    if (srcBank.bank.domain() != Domain::Source || tgtBank.bank.domain() != Domain::Target)
        throw ConfigError("bdm_mix_pair expects a source bank and a target bank");
    Rng srcStream = rng.fork();
    Rng tgtStream = rng.fork();
    MixedPair out;
    out.source = mixer.mix_one(src, Domain::Source, tgtBank, srcStream);
    out.target = mixer.mix_one(tgt, Domain::Target, srcBank, tgtStream);
    return out;
}

template <PatchSource SrcPixels, PatchSource TgtPixels>
MixedPair bdm_mix_pair(const Sample& src, const Sample& tgt, BankView<SrcPixels> srcBank,
                       BankView<TgtPixels> tgtBank, const ClassStats& sourceStats,
                       const SpatialPrior& prior, const MixConfig& config, Rng& rng) {
    return bdm_mix_pair(src, tgt, srcBank, tgtBank, Mixer(sourceStats, prior, config), rng);
}

}  // namespace bdm
