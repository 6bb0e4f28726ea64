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

// File-level pipeline steps behind the `bdm` command line tool. Each step
// reads and writes only the documented on-disk formats, and equal inputs,
// flags and seed give byte-identical outputs.

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "bdm/config.hpp"
#include "bdm/cut.hpp"
#include "bdm/mix.hpp"
#include "bdm/parallel.hpp"
#include "bdm/patch_bank.hpp"
#include "bdm/png_io.hpp"
#include "bdm/pseudo_label.hpp"
#include "bdm/report.hpp"
#include "bdm/serialize.hpp"
#include "bdm/stats.hpp"

namespace bdm {

namespace fs = std::filesystem;

inline ClassStats cmd_stats(const std::string& datasetDir, int numClasses, const std::string& outPath) {
    if (numClasses < 1 || numClasses > kMaxClasses) throw ConfigError("class count out of range");
    const auto dataset = load_dataset(datasetDir, numClasses);
    ClassStats stats = compute_class_stats(dataset, numClasses);
    save_stats(outPath, stats);
    return stats;
}

inline SpatialPrior cmd_prior(const std::string& datasetDir, int numClasses, double bandwidth,
                              const std::string& outPath, int resolution = SpatialPrior::kDefaultResolution) {
    if (numClasses < 1 || numClasses > kMaxClasses) throw ConfigError("class count out of range");
    std::vector<LabelMap> labels;
    for (const auto& id : list_dataset_ids(datasetDir)) {
        labels.push_back(read_label_png((fs::path(datasetDir) / "labels" / (id + ".png")).string()));
        for (ClassId v : labels.back().data())
            if (v != kIgnore && v >= numClasses) throw DataError("class id out of range in '" + id + "'");
    }
    SpatialPrior prior = build_spatial_prior(labels, numClasses, bandwidth, resolution);
    save_prior(outPath, prior);
    return prior;
}

/// Builds a bank with the difficulty scores of `statsFile` (computed over the
/// same dataset) and persists it under outDir.
inline PatchBank cmd_build_bank(const std::string& datasetDir, int gridCols, int gridRows, int numClasses,
                                int numGroups, const std::string& statsFile, Domain domain,
                                const std::string& outDir, int jobs = 1) {
    const ClassStats stats = load_stats(statsFile);
    if (stats.numClasses != numClasses) throw ConfigError("stats file class count does not match --classes");
    const auto dataset = load_dataset(datasetDir, numClasses);
    PatchBank bank = build_bank(dataset, gridCols, gridRows, numClasses, numGroups, stats.difficulty, domain, jobs);
    save_bank(outDir, bank, DatasetPatchSource(dataset, bank.grid()));
    return bank;
}

/// K planes from probs/<id>/0.png .. probs/<id>/<K-1>.png (16-bit gray,
/// value / 65535). Each pixel is renormalized after dequantization so the
/// rounding error of K planes does not trip the sum check.
inline ProbabilityMap read_probability_pngs(const std::string& dir) {
    std::vector<Plane<std::uint16_t>> planes;
    while (fs::exists(fs::path(dir) / (std::to_string(planes.size()) + ".png"))) {
        planes.push_back(read_gray16_png((fs::path(dir) / (std::to_string(planes.size()) + ".png")).string()));
        if (planes.back().width() != planes.front().width() || planes.back().height() != planes.front().height())
            throw DataError(dir + ": probability planes differ in size");
        if (static_cast<int>(planes.size()) > kMaxClasses) throw DataError(dir + ": too many probability planes");
    }
    if (planes.empty()) throw DataError(dir + ": no probability planes (expected 0.png, 1.png, ...)");
    const std::size_t n = planes.front().size();
    std::vector<float> data(planes.size() * n);
    for (std::size_t p = 0; p < n; ++p) {
        std::uint64_t sum = 0;
        for (const auto& pl : planes) sum += pl.data()[p];
        if (sum == 0) throw DataError(dir + ": pixel " + std::to_string(p) + " has zero probability mass");
        for (std::size_t c = 0; c < planes.size(); ++c)
            data[c * n + p] = static_cast<float>(static_cast<double>(planes[c].data()[p]) / static_cast<double>(sum));
    }
    return ProbabilityMap(planes.front().width(), planes.front().height(), static_cast<int>(planes.size()),
                          std::move(data));
}

/// Probability map of one sample: probs/<id>.bin, else probs/<id>/<c>.png.
inline ProbabilityMap load_probability_map(const std::string& datasetDir, const std::string& id) {
    const fs::path probs = fs::path(datasetDir) / "probs";
    if (fs::exists(probs / (id + ".bin"))) return read_probability_file((probs / (id + ".bin")).string());
    return read_probability_pngs((probs / id).string());
}

/// Converts every map under probs/ into pseudo labels/ and conf/ PNGs.
inline std::size_t cmd_pseudo_label(const std::string& datasetDir, const ThresholdPolicy& policy,
                                    const std::string& thresholdsOut = {}) {
    const fs::path probs = fs::path(datasetDir) / "probs";
    if (!fs::is_directory(probs)) throw DataError(datasetDir + ": missing probs/ directory");
    std::vector<std::string> ids;
    for (const auto& e : fs::directory_iterator(probs))
        if (e.path().extension() == ".bin" || e.is_directory()) ids.push_back(e.path().stem().string());
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    if (ids.empty()) throw DataError(datasetDir + ": no probability maps under probs/");

    std::vector<double> thresholds;
    if (policy.mode == ThresholdPolicy::Mode::PerClassQuantile) {
        std::vector<ProbabilityMap> maps;
        for (const auto& id : ids) {
            maps.push_back(load_probability_map(datasetDir, id));
            maps.back().validate();
        }
        thresholds = fit_class_thresholds(maps, policy.quantile);
        if (!thresholdsOut.empty())
            detail::write_text(thresholdsOut, Json{{"quantile", policy.quantile}, {"thresholds", thresholds}}.dump(2) + "\n");
    }
    for (const auto& id : ids) {
        const auto prob = load_probability_map(datasetDir, id);
        auto result = thresholds.empty() ? pseudo_label(prob, policy)
                                         : pseudo_label(prob, policy, std::span<const double>(thresholds));
        write_label_png((fs::path(datasetDir) / "labels" / (id + ".png")).string(), result.label);
        write_confidence_png((fs::path(datasetDir) / "conf" / (id + ".png")).string(), result.confidence);
    }
    return ids.size();
}

// ---------------------------------------------------------------------------
// Mixing
// ---------------------------------------------------------------------------

struct MixRunOptions {
    std::string outDir;
    std::size_t count = 0;  // number of (source, target) pairs
    int jobs = 1;
    bool baseline = true;  // tally a uniform-random shadow selection per cut cell
};

struct MixRunSummary {
    std::size_t pairs = 0;
    std::size_t cutCells = 0;
};

inline constexpr std::uint64_t kPairStreamTag = 0x5041495253ULL;      // pair index -> sample choice
inline constexpr std::uint64_t kBaselineStreamTag = 0x42415345ULL;    // shadow uniform selection

/// Per-class pixel tally of a uniform-random choice for the same cut cells.
inline std::vector<std::pair<ClassId, std::uint32_t>> shadow_baseline(const PatchBank& donor, std::size_t cuts,
                                                                      Rng& rng) {
    std::array<std::uint64_t, 256> hist{};
    for (std::size_t i = 0; i < cuts; ++i) {
        const Selection s = select_uniform(donor, rng);
        for (auto [c, n] : donor.patch(s.patchIndex).classPixels) hist[c] += n;
    }
    std::vector<std::pair<ClassId, std::uint32_t>> out;
    for (int c = 0; c < 256; ++c)
        if (hist[static_cast<std::size_t>(c)] > 0)
            out.emplace_back(static_cast<ClassId>(c), static_cast<std::uint32_t>(hist[static_cast<std::size_t>(c)]));
    return out;
}

inline std::string mixed_stem(std::size_t pair, const std::string& id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06zu_", pair);
    return buf + id;
}

/// Mixes `count` seeded random (source, target) pairs. Writes
///   <out>/source/{images,labels}/<pair>_<id>.png   source images with target patches
///   <out>/target/{images,labels}/<pair>_<id>.png   target images with source patches
///   <out>/manifest.jsonl                            two lines per pair, pair order
inline MixRunSummary cmd_mix(const RunConfig& rc, const MixRunOptions& opt) {
    rc.mix.validate();
    if (rc.paths.source.empty() || rc.paths.target.empty() || rc.paths.sourceBank.empty() ||
        rc.paths.targetBank.empty() || rc.paths.stats.empty() || rc.paths.prior.empty())
        throw ConfigError("mix needs source, target, source_bank, target_bank, stats and prior paths");
    if (opt.outDir.empty()) throw ConfigError("mix needs an output directory");

    const auto srcIds = list_dataset_ids(rc.paths.source);
    const auto tgtIds = list_dataset_ids(rc.paths.target);
    if (srcIds.empty() || tgtIds.empty()) throw DataError("source and target datasets must be non-empty");
    const PatchBank srcBank = load_bank(rc.paths.sourceBank);
    const PatchBank tgtBank = load_bank(rc.paths.targetBank);
    if (srcBank.domain() != Domain::Source || tgtBank.domain() != Domain::Target)
        throw ConfigError("source_bank must be a source bank and target_bank a target bank");
    const DirectoryPatchSource srcPixels(rc.paths.sourceBank), tgtPixels(rc.paths.targetBank);
    const ClassStats stats = load_stats(rc.paths.stats);
    const SpatialPrior prior = load_prior(rc.paths.prior);
    const Mixer mixer(stats, prior, rc.mix);
    const std::string hash = config_hash(rc.mix);

    std::vector<std::string> lines(2 * opt.count);
    std::vector<std::size_t> cuts(opt.count, 0);
    parallel_for(opt.count, opt.jobs, [&](std::size_t i) {
        Rng pairRng = Rng::derive(rc.mix.seed, i, kPairStreamTag);
        const std::string& srcId = srcIds[pairRng.uniform_index(srcIds.size())];
        const std::string& tgtId = tgtIds[pairRng.uniform_index(tgtIds.size())];
        const std::uint64_t pairSeed = pairRng.next();

        const Sample src = load_sample(rc.paths.source, srcId);
        const Sample tgt = load_sample(rc.paths.target, tgtId);
        Rng mixRng(pairSeed);
        const MixedPair mixed = bdm_mix_pair(src, tgt, BankView<DirectoryPatchSource>{srcBank, srcPixels},
                                             BankView<DirectoryPatchSource>{tgtBank, tgtPixels}, mixer, mixRng);

        const MixedSample* outs[2] = {&mixed.source, &mixed.target};
        const PatchBank* donors[2] = {&tgtBank, &srcBank};
        for (int d = 0; d < 2; ++d) {
            const MixedSample& m = *outs[d];
            const std::string dir = to_string(m.originDomain);
            const std::string stem = mixed_stem(i, m.originId);
            const std::string imageRel = dir + "/images/" + stem + ".png";
            const std::string labelRel = dir + "/labels/" + stem + ".png";
            write_rgb_png((fs::path(opt.outDir) / imageRel).string(), m.image);
            write_label_png((fs::path(opt.outDir) / labelRel).string(), m.label);

            Json line{{"pair", i},
                      {"direction", dir},
                      {"origin_id", m.originId},
                      {"config_hash", hash},
                      {"seed", rc.mix.seed},
                      {"pair_seed", pairSeed},
                      {"grid", {rc.mix.gridCols, rc.mix.gridRows}},
                      {"num_classes", rc.mix.numClasses},
                      {"selection", to_string(rc.mix.selection)},
                      {"image", imageRel},
                      {"label", labelRel},
                      {"cut", to_json(m.plan)}};
            Json prov = Json::array();
            for (const auto& r : m.provenance) prov.push_back(to_json(r));
            line["provenance"] = std::move(prov);
            if (opt.baseline) {
                Rng baseRng = Rng::derive(pairSeed, static_cast<std::uint64_t>(d), kBaselineStreamTag);
                line["baseline_pixels"] =
                    detail::class_pixels_json(shadow_baseline(*donors[d], m.plan.cutCells.size(), baseRng));
            }
            lines[2 * i + static_cast<std::size_t>(d)] = line.dump();
            cuts[i] += m.plan.cutCells.size();
        }
    });

    std::string manifest;
    for (const auto& l : lines) manifest += l + "\n";
    detail::write_text((fs::path(opt.outDir) / "manifest.jsonl").string(), manifest);

    MixRunSummary s;
    s.pairs = opt.count;
    for (auto c : cuts) s.cutCells += c;
    return s;
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

inline std::vector<Json> read_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open manifest " + path);
    std::vector<Json> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(is, line)) {
        ++n;
        if (line.empty()) continue;
        try {
            out.push_back(Json::parse(line));
        } catch (const Json::exception& e) {
            throw DataError(path + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

/// Adds one manifest line's pasted and baseline pixels to the tally.
inline void tally_line(SupervisionTally& t, const Json& line) {
    detail::guarded("manifest", [&] {
        auto add = [&](std::vector<std::uint64_t>& dst, const Json& pairs) {
            for (auto [c, n] : detail::class_pixels_from(pairs)) {
                if (c >= dst.size()) throw DataError("manifest class id beyond the stats class count");
                dst[c] += n;
            }
        };
        for (const auto& p : line.at("provenance")) add(t.selected, p.at("pasted_pixels"));
        if (line.contains("baseline_pixels")) add(t.baseline, line.at("baseline_pixels"));
        ++t.records;
        return 0;
    });
}

struct ReportOptions {
    std::string outDir;
    std::string sourceDir;  // for composites; optional
    std::string targetDir;  // for composites; optional
    std::size_t composites = 0;
};

struct ReportSummary {
    SupervisionTally tally;
    bool empty = true;
    std::size_t composites = 0;
};

/// Writes supervision.csv, supervision_hist.png and up to N composites
/// (original / cut / mixed). An empty manifest yields a header-only CSV.
inline ReportSummary cmd_report(const std::string& manifestPath, const std::string& statsFile,
                                const ReportOptions& opt) {
    const ClassStats stats = load_stats(statsFile);
    const auto lines = read_manifest(manifestPath);
    ReportSummary rs{SupervisionTally(stats.numClasses), lines.empty(), 0};
    for (const auto& l : lines) tally_line(rs.tally, l);

    const fs::path out(opt.outDir);
    if (lines.empty()) {
        detail::write_text((out / "supervision.csv").string(),
                           "class,selected_pixels,selected_share,baseline_pixels,baseline_share,source_pixels,"
                           "source_share\n");
        return rs;
    }
    detail::write_text((out / "supervision.csv").string(), supervision_csv(rs.tally, stats.pixelCounts));
    write_rgb_png((out / "supervision_hist.png").string(), render_histogram(rs.tally));

    const fs::path mixRoot = fs::path(manifestPath).parent_path();
    for (const auto& l : lines) {
        if (rs.composites >= opt.composites) break;
        const std::string dir = l.at("direction").get<std::string>();
        const std::string& dataset = dir == "source" ? opt.sourceDir : opt.targetDir;
        if (dataset.empty()) continue;
        const Sample original = load_sample(dataset, l.at("origin_id").get<std::string>());
        const auto gridDims = l.at("grid").get<std::vector<int>>();
        const GridSpec grid = GridSpec::for_image(original.width(), original.height(), gridDims.at(0), gridDims.at(1));
        Sample cut = original;
        for (int cell : l.at("cut").at("cut_cells").get<std::vector<int>>()) cut_region(cut, grid.cell_rect(cell));
        const Image mixedImage = read_rgb_png((mixRoot / l.at("image").get<std::string>()).string());
        const LabelMap mixedLabel = read_label_png((mixRoot / l.at("label").get<std::string>()).string());
        const std::string name = mixed_stem(l.at("pair").get<std::size_t>(), dir + "_" + original.id);
        write_rgb_png((out / "composites" / (name + ".png")).string(), composite(original, cut, mixedImage, mixedLabel));
        ++rs.composites;
    }
    return rs;
}

}  // namespace bdm
