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


// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Informational lines start with "info".

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <tuple>

#include "bdm/bdm.hpp"
#include "bdm/pipeline.hpp"
#include "cli_support.hpp"
#include "toy_data.hpp"

namespace {

using namespace bdm;
using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(const char* name, double budgetSeconds, const std::function<Outcome()>& body) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    const bool inBudget = budgetSeconds <= 0 || secs < budgetSeconds;
    const bool pass = o.pass && inBudget;
    if (!pass) ++failures;
    std::printf("%s  %-28s %s; %.2f s", pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
    if (budgetSeconds > 0) std::printf(" (budget %.0f s)", budgetSeconds);
    std::printf("\n");
    std::fflush(stdout);
}

void info(const std::string& line) {
    std::printf("info  %s\n", line.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// --- class-balance formula ----------------------------------------------------

Outcome class_balance_oracle() {
    Rng rng(20240601);
    double worst = 0.0, worstSum = 0.0;
    for (int v = 0; v < 200; ++v) {
        const int k = 2 + static_cast<int>(rng.uniform_index(18));  // 2..19
        const double alpha = static_cast<double>(v % 3);              // 0, 1, 2
        std::vector<std::uint64_t> n(static_cast<std::size_t>(k));
        for (auto& x : n) x = rng.uniform_index(5) == 0 ? 0 : 1 + rng.uniform_index(10'000'000);
        n[0] = std::max<std::uint64_t>(n[0], 1);
        n[1] = std::max<std::uint64_t>(n[1], 1);

        // Straight-line form: p_i = (-log(N_i / sum_j N_j))^alpha / sum_k (-log(N_k / sum_j N_j))^alpha,
        // over classes with N_i > 0.
        double total = 0;
        for (auto x : n) total += static_cast<double>(x);
        std::vector<double> w(n.size(), 0.0);
        double z = 0;
        for (std::size_t i = 0; i < n.size(); ++i)
            if (n[i] > 0) z += w[i] = std::pow(-std::log(static_cast<double>(n[i]) / total), alpha);
        const auto got = class_balance_probs(n, alpha);
        double sum = 0;
        for (std::size_t i = 0; i < n.size(); ++i) {
            worst = std::max(worst, std::abs(got[i] - w[i] / z));
            sum += got[i];
        }
        worstSum = std::max(worstSum, std::abs(sum - 1.0));
    }
    return {worst <= 1e-12 && worstSum <= 1e-9,
            fmt("200 vectors, max |diff| %.2e (tol 1e-12), max |sum-1| %.2e (tol 1e-9)", worst, worstSum)};
}

// --- joint selection ----------------------------------------------------------

struct SelectionCheck {
    std::size_t triples = 0;
    double l1 = 0.0;
    double noiseL1 = 0.0;  // expected L1 of an exact sampler at this sample size
};

SelectionCheck selection_check(const PatchBank& bank, const SelectionWeights& w, int draws, std::uint64_t seed) {
    std::map<std::tuple<int, int, int>, double> want;
    double z = 0;
    for (int c = 0; c < bank.num_classes(); ++c)
        for (int j = 0; j < bank.grid().cell_count(); ++j)
            for (int g = 0; g < bank.num_groups(); ++g)
                if (!bank.query(j, c, g).empty()) z += want[{c, j, g}] = w.pCB[c] * w.pSC[j] * w.pPC[g];
    for (auto& [key, p] : want) p /= z;

    std::map<std::tuple<int, int, int>, double> got;
    Rng rng(seed);
    for (int i = 0; i < draws; ++i) {
        const auto s = select_patch(bank, 0, w, rng);
        got[{s.cls, s.cell, s.group}] += 1.0 / draws;
    }
    SelectionCheck out;
    out.triples = want.size();
    for (auto& [key, p] : want) {
        out.l1 += std::abs(p - got[key]);
        out.noiseL1 += std::sqrt(2.0 * p * (1 - p) / (std::numbers::pi * draws));
    }
    for (auto& [key, p] : got)
        if (!want.count(key)) out.l1 += p;
    return out;
}

PatchBank random_records_bank(int cols, int rows, int k, int r, std::size_t records, std::uint64_t seed,
                              double presence) {
    Rng rng(seed);
    std::vector<PatchRecord> recs;
    for (std::size_t i = 0; i < records; ++i) {
        PatchRecord p;
        p.sampleId = toy::id_for("r", i);
        p.cellIndex = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(cols * rows)));
        p.normConf = rng.uniform01() - 0.5;
        for (int c = 0; c < k; ++c)
            if (rng.uniform01() < presence) p.classPixels.emplace_back(static_cast<ClassId>(c), 1u);
        if (p.classPixels.empty()) p.classPixels.emplace_back(static_cast<ClassId>(0), 1u);
        recs.push_back(std::move(p));
    }
    return PatchBank(Domain::Source, GridSpec::for_image(cols * 8, rows * 8, cols, rows), k, r,
                     std::vector<double>(static_cast<std::size_t>(k), 0.5), std::move(recs));
}

Outcome joint_selection() {
    // 2x2 grid, K = 3, R = 3, sparse membership so several sequences stay empty.
    const PatchBank bank = random_records_bank(2, 2, 3, 3, 14, 7, 0.35);
    const SelectionWeights w{{0.6, 0.3, 0.1}, {0.05, 0.15, 0.3, 0.5}, {0.1, 0.3, 0.6}};
    const auto c = selection_check(bank, w, 100'000, 99);
    return {c.triples <= 50 && c.l1 <= 0.01,
            fmt("%zu non-empty triples, L1 %.4f over 100000 draws (tol 0.01; exact-sampler noise %.4f)", c.triples, c.l1,
                c.noiseL1)};
}

void joint_selection_info() {
    // Same bank and weights as the criterion, across 20 draw seeds.
    const PatchBank bank = random_records_bank(2, 2, 3, 3, 14, 7, 0.35);
    const SelectionWeights w{{0.6, 0.3, 0.1}, {0.05, 0.15, 0.3, 0.5}, {0.1, 0.3, 0.6}};
    int within = 0;
    double mean = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto c = selection_check(bank, w, 100'000, seed);
        within += c.l1 <= 0.01;
        mean += c.l1 / 20;
    }
    info(fmt("joint selection, 20 draw seeds on the same bank: mean L1 %.4f, %d/20 within 0.01", mean, within));

    // 2x2 grid, K = 4, R = 3: all 48 triples non-empty, near-uniform weights.
    const PatchBank wide = random_records_bank(2, 2, 4, 3, 400, 8, 0.6);
    const SelectionWeights u{{0.25, 0.25, 0.25, 0.25}, {0.25, 0.25, 0.25, 0.25}, {0.3, 0.3, 0.4}};
    const auto c = selection_check(wide, u, 100'000, 100);
    info(fmt("joint selection, near-uniform %zu-triple bank: L1 %.4f, exact-sampler noise %.4f", c.triples, c.l1,
             c.noiseL1));
}

// --- cut ------------------------------------------------------------------------

Outcome cut_correctness() {
    Rng data(301), rng(302);
    const GridSpec grid = GridSpec::for_image(48, 36, 4, 3);
    std::size_t examined = 0, cut = 0, violations = 0;
    for (int i = 0; i < 1000; ++i) {
        const Sample s = toy::random_sample(data, toy::id_for("c", static_cast<std::size_t>(i)), 48, 36, 19, 5);
        const auto res = confidence_cutout(s, grid, 0.2, 4, rng);
        std::set<int> cutSet(res.plan.cutCells.begin(), res.plan.cutCells.end());
        for (int cell : res.plan.candidates) {
            const Rect r = grid.cell_rect(cell);
            int ignored = 0;
            for (int y = r.y; y < r.y + r.height; ++y)
                for (int x = r.x; x < r.x + r.width; ++x) ignored += s.label(x, y) == kIgnore;
            const double ratio = ignored / static_cast<double>(r.area());
            ++examined;
            if (cutSet.count(cell)) {
                ++cut;
                if (!(ratio > 0.2)) ++violations;
                for (int y = r.y; y < r.y + r.height; ++y)
                    for (int x = r.x; x < r.x + r.width; ++x)
                        if (res.masked.label(x, y) != kIgnore) ++violations;
            } else if (ratio > 0.2) {
                ++violations;
            }
        }
        for (int y = 0; y < 36; ++y)
            for (int x = 0; x < 48; ++x) {
                bool inCut = false;
                for (int c : cutSet) inCut |= grid.cell_rect(c).contains(x, y);
                if (inCut) continue;
                if (res.masked.label(x, y) != s.label(x, y) ||
                    !std::equal(s.image.pixel(x, y), s.image.pixel(x, y) + 3, res.masked.image.pixel(x, y)))
                    ++violations;
            }
    }
    return {violations == 0 && cut > 0 && cut < examined,
            fmt("1000 samples, %zu cells examined, %zu cut, %zu violations", examined, cut, violations)};
}

// --- bank -----------------------------------------------------------------------

Outcome bank_structure() {
    const auto ds = toy::random_dataset(401, "b", 50, 48, 36, 5, 3);
    const auto stats = compute_class_stats(ds, 5);
    const PatchBank bank = build_bank(ds, 4, 3, 5, 3, stats.difficulty);
    std::size_t bad = 0;
    for (int cell = 0; cell < 12; ++cell)
        for (int c = 0; c < 5; ++c) {
            double prev = -1e300;
            std::size_t lo = SIZE_MAX, hi = 0;
            for (int g = 0; g < 3; ++g) {
                const auto seq = bank.query(cell, c, g);
                lo = std::min(lo, seq.size());
                hi = std::max(hi, seq.size());
                for (auto idx : seq) {
                    if (bank.patch(idx).normConf < prev) ++bad;
                    prev = bank.patch(idx).normConf;
                }
            }
            if (hi - lo > 1) ++bad;
        }
    return {bank.sequence_count() == 180 && bad == 0,
            fmt("%zu sequences (want 180), %zu non-empty, %zu order/split violations", bank.sequence_count(),
                bank.non_empty_sequence_count(), bad)};
}

// --- class-balance effect -------------------------------------------------------

double rare_share(const std::vector<Sample>& src, const std::vector<Sample>& tgt, const ClassStats& stats,
                  const SpatialPrior& prior, const PatchBank& srcBank, const PatchBank& tgtBank, MixConfig cfg,
                  std::size_t pairs, std::size_t& mixedSamples) {
    const DatasetPatchSource srcPx(src, srcBank.grid()), tgtPx(tgt, tgtBank.grid());
    const Mixer mixer(stats, prior, cfg);
    std::vector<std::uint64_t> px(3, 0);
    mixedSamples = 0;
    for (std::size_t i = 0; i < pairs; ++i) {
        Rng pick = Rng::derive(cfg.seed, i, kPairStreamTag);
        const auto& a = src[pick.uniform_index(src.size())];
        const auto& b = tgt[pick.uniform_index(tgt.size())];
        Rng rng(pick.next());
        const auto m = bdm_mix_pair(a, b, BankView<DatasetPatchSource>{srcBank, srcPx},
                                    BankView<DatasetPatchSource>{tgtBank, tgtPx}, mixer, rng);
        for (const auto* ms : {&m.source, &m.target}) {
            ++mixedSamples;
            for (const auto& pr : ms->provenance)
                for (auto [c, n] : pr.pastedClassPixels) px[c] += n;
        }
    }
    const double total = static_cast<double>(px[0] + px[1] + px[2]);
    return total > 0 ? static_cast<double>(px[2]) / total : 0.0;
}

Outcome class_balance_effect() {
    const auto src = toy::long_tail_dataset(501, "s", 200);
    const auto tgt = toy::long_tail_dataset(502, "t", 200);
    const auto stats = compute_class_stats(src, 3);
    const double n = static_cast<double>(stats.pixelCounts[0] + stats.pixelCounts[1] + stats.pixelCounts[2]);
    info(fmt("long-tail source shares %.3f / %.3f / %.3f", stats.pixelCounts[0] / n, stats.pixelCounts[1] / n,
             stats.pixelCounts[2] / n));
    const auto prior = build_spatial_prior(src, 3, 0.1);
    const auto tstats = compute_class_stats(tgt, 3);
    const PatchBank srcBank = build_bank(src, 4, 3, 3, 3, stats.difficulty, Domain::Source);
    const PatchBank tgtBank = build_bank(tgt, 4, 3, 3, 3, tstats.difficulty, Domain::Target);

    MixConfig cfg;
    cfg.numClasses = 3;
    cfg.seed = 2024;
    std::size_t nb = 0, nu = 0;
    const double bdmShare = rare_share(src, tgt, stats, prior, srcBank, tgtBank, cfg, 2500, nb);
    cfg.selection = SelectionMode::UniformRandom;
    const double uniShare = rare_share(src, tgt, stats, prior, srcBank, tgtBank, cfg, 2500, nu);
    const double ratio = uniShare > 0 ? bdmShare / uniShare : INFINITY;
    return {nb == 5000 && nu == 5000 && ratio >= 3.0,
            fmt("rare-class pasted share %.4f (selection) vs %.4f (uniform) = %.2fx over %zu mixed samples (want >= 3x)",
                bdmShare, uniShare, ratio, nb)};
}

// --- provenance -----------------------------------------------------------------

Outcome provenance_audit() {
    const auto src = toy::random_dataset(601, "s", 30, 48, 36, 6, 4);
    const auto tgt = toy::random_dataset(602, "t", 30, 48, 36, 6, 4);
    const auto stats = compute_class_stats(src, 6);
    const auto prior = build_spatial_prior(src, 6, 0.1);
    const PatchBank srcBank = build_bank(src, 4, 3, 6, 3, stats.difficulty, Domain::Source);
    const PatchBank tgtBank = build_bank(tgt, 4, 3, 6, 3, compute_class_stats(tgt, 6).difficulty, Domain::Target);
    const DatasetPatchSource srcPx(src, srcBank.grid()), tgtPx(tgt, tgtBank.grid());
    std::set<std::string> srcIds, tgtIds;
    for (const auto& s : src) srcIds.insert(s.id);
    for (const auto& s : tgt) tgtIds.insert(s.id);

    MixConfig cfg;
    cfg.numClasses = 6;
    const Mixer mixer(stats, prior, cfg);
    std::size_t pastedS = 0, pastedT = 0, bad = 0;
    auto audit = [&](const MixedSample& m, const PatchBank& bank, const std::set<std::string>& ids, const auto& px) {
        for (const auto& pr : m.provenance) {
            const auto& rec = bank.patch(pr.patchIndex);
            bool ok = pr.patchDomain == bank.domain() && ids.count(pr.patchSampleId) && rec.sampleId == pr.patchSampleId;
            const auto crop = px.crop(rec);
            const Rect r = bank.grid().cell_rect(pr.cutCell);
            for (int y = 0; y < r.height && ok; ++y)
                for (int x = 0; x < r.width && ok; ++x) ok = m.label(r.x + x, r.y + y) == crop.label(x, y);
            bad += !ok;
        }
    };
    for (std::size_t i = 0; i < 300; ++i) {
        Rng rng = Rng::derive(77, i);
        const auto m = bdm_mix_pair(src[i % 30], tgt[(i * 7) % 30], BankView<DatasetPatchSource>{srcBank, srcPx},
                                    BankView<DatasetPatchSource>{tgtBank, tgtPx}, mixer, rng);
        if (m.source.originDomain != Domain::Source || m.target.originDomain != Domain::Target) ++bad;
        pastedS += m.source.provenance.size();
        pastedT += m.target.provenance.size();
        audit(m.source, tgtBank, tgtIds, tgtPx);
        audit(m.target, srcBank, srcIds, srcPx);
    }
    return {bad == 0 && pastedS > 0 && pastedT > 0,
            fmt("300 pairs: %zu source-side pastes from target bank, %zu target-side pastes from source bank, %zu "
                "mis-traced",
                pastedS, pastedT, bad)};
}

// --- CLI determinism ------------------------------------------------------------

Outcome cli_determinism() {
    testing::Workspace ws("accept", toy::random_dataset(701, "s", 12, 48, 36, 5, 3),
                          toy::random_dataset(702, "t", 12, 48, 36, 5, 3), 5);
    testing::Workspace::check(ws.run(ws.mix_args(ws.dir / "run1", 20, 123)));
    testing::Workspace::check(ws.run(ws.mix_args(ws.dir / "run2", 20, 123)));
    const auto a = testing::snapshot(ws.dir / "run1"), b = testing::snapshot(ws.dir / "run2");
    std::size_t images = 0;
    for (const auto& [path, bytes] : a) images += path.ends_with(".png");
    return {!a.empty() && a == b,
            fmt("two runs, seed 123: %zu files each (%zu PNGs + manifest), %s", a.size(), images,
                a == b ? "byte-identical" : "DIFFER")};
}

// --- spatial prior --------------------------------------------------------------

double top_row_mass(const std::vector<Sample>& ds, int k, int cls, int& argmaxClass) {
    const auto prior = build_spatial_prior(ds, k, 0.1);
    const GridSpec grid = GridSpec::for_image(ds.front().width(), ds.front().height(), 4, 3);
    std::vector<NormalizedPoint> centers;
    for (int j = 0; j < 12; ++j) centers.push_back(grid.normalized_center(j));
    double worst = 1.0;
    argmaxClass = -1;
    for (int cell = 0; cell < 4; ++cell) {
        argmaxClass = spatial_argmax_class(prior, grid.normalized_center(cell));
        if (argmaxClass != cls) return 0.0;
        const auto p = spatial_continuity_probs(prior, grid.normalized_center(cell), centers);
        worst = std::min(worst, p[0] + p[1] + p[2] + p[3]);
    }
    return worst;
}

Outcome spatial_prior_sanity() {
    Rng rng(801);
    std::vector<Sample> ds;
    for (int i = 0; i < 100; ++i) ds.push_back(toy::sky_sample(rng, toy::id_for("k", static_cast<std::size_t>(i))));
    int arg = -1;
    const double mass = top_row_mass(ds, 3, 2, arg);
    return {mass >= 0.8, fmt("class confined to the top half (band ending in [0.25, 0.5)): min top-row P_SC mass "
                             "%.3f over the 4 top-row cut centers (want >= 0.8)",
                             mass)};
}

void spatial_prior_exact_half_info() {
    Rng rng(802);
    std::vector<Sample> ds;
    for (int i = 0; i < 20; ++i) {
        LabelMap l(64, 48, 0);
        toy::fill_rect(l, 0, 0, 64, 24, 1);
        ds.push_back({toy::id_for("h", static_cast<std::size_t>(i)), toy::render(l, rng), l, std::nullopt});
    }
    int arg = -1;
    const double mass = top_row_mass(ds, 2, 1, arg);
    info(fmt("class filling exactly the top half: top-row P_SC mass %.3f (the middle row's centers lie on the "
             "boundary at y = 0.5)",
             mass));
}

}  // namespace

int main() {
    report("class-balance formula", 1, class_balance_oracle);
    report("joint selection", 10, joint_selection);
    joint_selection_info();
    report("cut correctness", 30, cut_correctness);
    report("bank structure", 10, bank_structure);
    report("class-balance effect", 120, class_balance_effect);
    report("bidirectional provenance", 0, provenance_audit);
    report("CLI determinism", 0, cli_determinism);
    report("spatial prior", 0, spatial_prior_sanity);
    spatial_prior_exact_half_info();
    std::printf("%s: %d criterion/criteria failed\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
    return failures == 0 ? 0 : 1;
}
