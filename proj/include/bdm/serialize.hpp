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

// On-disk formats: class stats (JSON), spatial prior (JSON + float64 blob),
// patch bank (JSON index + content-addressed crop PNGs), mix config and
// manifest records (JSON lines). Every document carries "format" and
// "version"; loaders reject anything else.

#pragma once

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "bdm/core_types.hpp"
#include "bdm/mix.hpp"
#include "bdm/patch_bank.hpp"
#include "bdm/png_io.hpp"
#include "bdm/stats.hpp"

namespace bdm {

using Json = nlohmann::json;

inline constexpr int kFormatVersion = 1;
inline constexpr const char* kStatsFormat = "bdm-class-stats";
inline constexpr const char* kPriorFormat = "bdm-spatial-prior";
inline constexpr const char* kBankFormat = "bdm-patch-bank";

namespace detail {

inline void check_header(const Json& j, const char* format, const std::string& what) {
    if (!j.is_object() || j.value("format", std::string{}) != format)
        throw DataError(what + ": not a " + std::string(format) + " document");
    if (j.value("version", -1) != kFormatVersion)
        throw DataError(what + ": unsupported " + std::string(format) + " version " +
                        (j.contains("version") ? j["version"].dump() : std::string("(missing)")));
}

inline Json read_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open " + path);
    try {
        return Json::parse(is);
    } catch (const Json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
}

inline void write_text(const std::string& path, const std::string& text) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open " + path + " for writing");
    os << text;
    if (!os) throw DataError("failed writing " + path);
}

/// Wraps nlohmann parse/type errors as data errors.
template <typename Fn>
auto guarded(const std::string& what, Fn&& fn) {
    try {
        return fn();
    } catch (const Json::exception& e) {
        throw DataError(what + ": " + e.what());
    }
}

inline Json class_pixels_json(const std::vector<std::pair<ClassId, std::uint32_t>>& v) {
    Json a = Json::array();
    for (auto [c, n] : v) a.push_back({c, n});
    return a;
}

inline std::vector<std::pair<ClassId, std::uint32_t>> class_pixels_from(const Json& a) {
    std::vector<std::pair<ClassId, std::uint32_t>> v;
    for (const auto& e : a) v.emplace_back(e.at(0).get<ClassId>(), e.at(1).get<std::uint32_t>());
    return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Class stats
// ---------------------------------------------------------------------------

inline Json to_json(const ClassStats& s) {
    return {{"format", kStatsFormat},
            {"version", kFormatVersion},
            {"num_classes", s.numClasses},
            {"pixel_counts", s.pixelCounts},
            {"difficulty", s.difficulty},
            {"global_mean_confidence", s.globalMeanConfidence},
            {"empty", s.empty()}};
}

inline ClassStats stats_from_json(const Json& j, const std::string& what = "stats") {
    detail::check_header(j, kStatsFormat, what);
    return detail::guarded(what, [&] {
        ClassStats s;
        s.numClasses = j.at("num_classes").get<int>();
        s.pixelCounts = j.at("pixel_counts").get<std::vector<std::uint64_t>>();
        s.difficulty = j.at("difficulty").get<std::vector<double>>();
        s.globalMeanConfidence = j.at("global_mean_confidence").get<double>();
        if (static_cast<int>(s.pixelCounts.size()) != s.numClasses ||
            static_cast<int>(s.difficulty.size()) != s.numClasses)
            throw DataError(what + ": per-class arrays do not match num_classes");
        return s;
    });
}

inline void save_stats(const std::string& path, const ClassStats& s) {
    detail::write_text(path, to_json(s).dump(2) + "\n");
}

inline ClassStats load_stats(const std::string& path) { return stats_from_json(detail::read_json(path), path); }

// ---------------------------------------------------------------------------
// Spatial prior: <name>.json + <name>.bin (K*res*res float64 little-endian,
// class-major, then row-major)
// ---------------------------------------------------------------------------

inline std::string prior_blob_path(const std::string& jsonPath) {
    return std::filesystem::path(jsonPath).replace_extension(".bin").string();
}

inline void save_prior(const std::string& jsonPath, const SpatialPrior& prior) {
    const std::string blob = prior_blob_path(jsonPath);
    std::vector<bool> empty;
    for (int c = 0; c < prior.num_classes(); ++c) empty.push_back(prior.is_empty(c));
    Json j{{"format", kPriorFormat},
           {"version", kFormatVersion},
           {"num_classes", prior.num_classes()},
           {"resolution", prior.resolution()},
           {"bandwidth", prior.bandwidth()},
           {"blob", std::filesystem::path(blob).filename().string()},
           {"empty_classes", empty}};
    detail::write_text(jsonPath, j.dump(2) + "\n");

    std::string bytes;
    bytes.reserve(prior.values().size() * 8);
    for (double v : prior.values()) {
        auto bits = std::bit_cast<std::uint64_t>(v);
        for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
    }
    detail::write_text(blob, bytes);
}

inline SpatialPrior load_prior(const std::string& jsonPath) {
    const Json j = detail::read_json(jsonPath);
    detail::check_header(j, kPriorFormat, jsonPath);
    const auto [k, res, bw, blobName] = detail::guarded(jsonPath, [&] {
        return std::tuple{j.at("num_classes").get<int>(), j.at("resolution").get<int>(),
                          j.at("bandwidth").get<double>(), j.at("blob").get<std::string>()};
    });
    if (k < 1 || k > kMaxClasses || res < 1) throw DataError(jsonPath + ": invalid prior shape");
    const auto blob = (std::filesystem::path(jsonPath).parent_path() / blobName).string();
    const auto bytes = png_detail::slurp(blob);
    const std::size_t n = static_cast<std::size_t>(k) * res * res;
    if (bytes.size() != n * 8) throw DataError(blob + ": prior blob size mismatch");
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[8 * i + b]) << (8 * b);
        values[i] = std::bit_cast<double>(bits);
    }
    return SpatialPrior(k, res, bw, std::move(values));
}

// ---------------------------------------------------------------------------
// Patch bank directory:
//   bank.json                       index (grid, K, R, patches, sequence table)
//   crops/<k0k1>/<key>.img.png      RGB crop
//   crops/<k0k1>/<key>.lbl.png      label crop
// ---------------------------------------------------------------------------

inline std::string crop_path(const std::string& bankDir, const std::string& key, bool label) {
    return (std::filesystem::path(bankDir) / "crops" / key.substr(0, 2) /
            (key + (label ? ".lbl.png" : ".img.png")))
        .string();
}

inline Json to_json(const PatchBank& bank) {
    const GridSpec& g = bank.grid();
    Json patches = Json::array();
    for (const auto& p : bank.patches())
        patches.push_back({{"sample", p.sampleId},
                           {"cell", p.cellIndex},
                           {"score", p.normConf},
                           {"classes", detail::class_pixels_json(p.classPixels)},
                           {"crop", p.cropKey}});
    Json sequences = Json::array();
    for (int cell = 0; cell < g.cell_count(); ++cell)
        for (int c = 0; c < bank.num_classes(); ++c)
            for (int r = 0; r < bank.num_groups(); ++r) {
                const auto seq = bank.query(cell, c, r);
                sequences.push_back({{"cell", cell},
                                     {"class", c},
                                     {"group", r},
                                     {"patches", std::vector<std::uint32_t>(seq.begin(), seq.end())}});
            }
    Json boundaries = Json::array();
    for (int cell = 0; cell < g.cell_count(); ++cell)
        for (int c = 0; c < bank.num_classes(); ++c) {
            Json row = Json::array();
            for (double b : bank.group_boundaries(cell, c)) row.push_back(std::isnan(b) ? Json(nullptr) : Json(b));
            boundaries.push_back(std::move(row));
        }
    return {{"format", kBankFormat},
            {"version", kFormatVersion},
            {"domain", to_string(bank.domain())},
            {"grid",
             {{"cols", g.cols()},
              {"rows", g.rows()},
              {"cell_width", g.cell_width()},
              {"cell_height", g.cell_height()},
              {"image_width", g.image_width()},
              {"image_height", g.image_height()}}},
            {"num_classes", bank.num_classes()},
            {"num_groups", bank.num_groups()},
            {"difficulty", bank.difficulty()},
            {"patches", std::move(patches)},
            {"sequences", std::move(sequences)},
            {"group_boundaries", std::move(boundaries)}};
}

/// Rebuilds the bank from its index. The sequence table is recomputed from the
/// patch list and must agree with the stored one.
inline PatchBank bank_from_json(const Json& j, const std::string& what = "bank") {
    detail::check_header(j, kBankFormat, what);
    return detail::guarded(what, [&] {
        const std::string domain = j.at("domain").get<std::string>();
        if (domain != "source" && domain != "target") throw DataError(what + ": unknown domain '" + domain + "'");
        const Json& g = j.at("grid");
        const GridSpec grid = GridSpec::for_image(g.at("image_width").get<int>(), g.at("image_height").get<int>(),
                                                  g.at("cols").get<int>(), g.at("rows").get<int>());
        if (grid.cell_width() != g.at("cell_width").get<int>() || grid.cell_height() != g.at("cell_height").get<int>())
            throw DataError(what + ": inconsistent grid geometry");
        std::vector<PatchRecord> records;
        for (const auto& p : j.at("patches")) {
            PatchRecord r;
            r.sampleId = p.at("sample").get<std::string>();
            r.cellIndex = p.at("cell").get<int>();
            r.normConf = p.at("score").get<double>();
            r.classPixels = detail::class_pixels_from(p.at("classes"));
            r.cropKey = p.at("crop").get<std::string>();
            records.push_back(std::move(r));
        }
        PatchBank bank(domain == "source" ? Domain::Source : Domain::Target, grid, j.at("num_classes").get<int>(),
                       j.at("num_groups").get<int>(), j.at("difficulty").get<std::vector<double>>(),
                       std::move(records));
        const Json& seqs = j.at("sequences");
        if (seqs.size() != bank.sequence_count()) throw DataError(what + ": sequence table size mismatch");
        for (const auto& s : seqs) {
            const auto stored = s.at("patches").get<std::vector<std::uint32_t>>();
            const auto rebuilt = bank.query(s.at("cell").get<int>(), s.at("class").get<int>(), s.at("group").get<int>());
            if (!std::equal(stored.begin(), stored.end(), rebuilt.begin(), rebuilt.end()))
                throw DataError(what + ": sequence table disagrees with patch scores");
        }
        return bank;
    });
}

/// Writes bank.json and every referenced crop (deduplicated by content key).
template <PatchSource S>
void save_bank(const std::string& dir, const PatchBank& bank, const S& pixels) {
    namespace fs = std::filesystem;
    for (const auto& rec : bank.patches()) {
        const std::string img = crop_path(dir, rec.cropKey, false);
        if (fs::exists(img)) continue;
        const PatchCrop crop = pixels.crop(rec);
        write_label_png(crop_path(dir, rec.cropKey, true), crop.label);
        write_rgb_png(img, crop.image);
    }
    detail::write_text((fs::path(dir) / "bank.json").string(), to_json(bank).dump() + "\n");
}

inline PatchBank load_bank(const std::string& dir) {
    const std::string index = (std::filesystem::path(dir) / "bank.json").string();
    return bank_from_json(detail::read_json(index), index);
}

/// Serves crops from a bank directory; reads on demand.
class DirectoryPatchSource {
public:
    explicit DirectoryPatchSource(std::string dir) : dir_(std::move(dir)) {}

    PatchCrop crop(const PatchRecord& r) const {
        return {read_rgb_png(crop_path(dir_, r.cropKey, false)), read_label_png(crop_path(dir_, r.cropKey, true))};
    }

    const std::string& dir() const noexcept { return dir_; }

private:
    std::string dir_;
};

// ---------------------------------------------------------------------------
// Mix config
// ---------------------------------------------------------------------------

inline const char* to_string(SpatialClassRule r) {
    return r == SpatialClassRule::PriorArgmax ? "prior-argmax" : "cut-region-dominant";
}
inline const char* to_string(SelectionMode m) { return m == SelectionMode::Bdm ? "bdm" : "uniform"; }

inline SpatialClassRule parse_spatial_rule(const std::string& s) {
    if (s == "prior-argmax") return SpatialClassRule::PriorArgmax;
    if (s == "cut-region-dominant") return SpatialClassRule::CutRegionDominant;
    throw ConfigError("unknown spatial rule '" + s + "'");
}
inline SelectionMode parse_selection_mode(const std::string& s) {
    if (s == "bdm") return SelectionMode::Bdm;
    if (s == "uniform") return SelectionMode::UniformRandom;
    throw ConfigError("unknown selection mode '" + s + "'");
}

inline Json to_json(const MixConfig& c) {
    return {{"gamma", c.gamma},
            {"alpha", c.alpha},
            {"num_classes", c.numClasses},
            {"num_groups", c.numGroups},
            {"group_probs", c.groupProbs},
            {"num_cut_boxes", c.numCutBoxes},
            {"seed", c.seed},
            {"grid_cols", c.gridCols},
            {"grid_rows", c.gridRows},
            {"bandwidth", c.bandwidth},
            {"spatial_rule", to_string(c.spatialRule)},
            {"selection", to_string(c.selection)}};
}

/// Content hash of the resolved config, as 16 hex digits.
inline std::string config_hash(const MixConfig& c) { return detail::hex64(fnv1a64(to_json(c).dump())); }

// ---------------------------------------------------------------------------
// Manifest lines
// ---------------------------------------------------------------------------

inline Json to_json(const CutPlan& p) {
    return {{"candidates", p.candidates}, {"ratios", p.perCellUncertainRatio}, {"cut_cells", p.cutCells}};
}

inline Json to_json(const PasteRecord& r) {
    return {{"cut_cell", r.cutCell},
            {"class", r.cls},
            {"source_cell", r.sourceCell},
            {"group", r.group},
            {"patch_domain", to_string(r.patchDomain)},
            {"patch_sample", r.patchSampleId},
            {"patch_index", r.patchIndex},
            {"pasted_pixels", detail::class_pixels_json(r.pastedClassPixels)}};
}

}  // namespace bdm
