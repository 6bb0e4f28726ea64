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

// bdm: dataset statistics, patch banks, bidirectional mixing and reports.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 internal invariant.

#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "bdm/pipeline.hpp"

namespace {

bdm::Domain parse_domain(const std::string& s) {
    if (s == "source") return bdm::Domain::Source;
    if (s == "target") return bdm::Domain::Target;
    throw bdm::ConfigError("domain must be 'source' or 'target'");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bidirectional domain mixup dataset synthesis"};
    app.require_subcommand(1);

    // pseudo-label
    auto* pl = app.add_subcommand("pseudo-label", "Threshold probs/<id>.bin or probs/<id>/<class>.png into labels/ and conf/");
    std::string plData, plThresholdsOut;
    double plFixed = -1.0, plQuantile = 0.5;
    pl->add_option("--data", plData, "Dataset directory")->required();
    auto* plFixedOpt = pl->add_option("--fixed", plFixed, "Fixed threshold for every class");
    pl->add_option("--quantile", plQuantile, "Per-class quantile (capped at 0.9)")->excludes(plFixedOpt);
    pl->add_option("--thresholds-out", plThresholdsOut, "Write fitted per-class thresholds (JSON)");

    // stats
    auto* st = app.add_subcommand("stats", "Class pixel counts and difficulty");
    std::string stData, stOut;
    int stK = 19;
    st->add_option("--data", stData, "Dataset directory")->required();
    st->add_option("--classes", stK, "Class count K")->capture_default_str();
    st->add_option("--out", stOut, "Output stats JSON")->required();

    // prior
    auto* pr = app.add_subcommand("prior", "Class-wise spatial prior from labels");
    std::string prData, prOut;
    int prK = 19, prRes = bdm::SpatialPrior::kDefaultResolution;
    double prBandwidth = 0.1;
    pr->add_option("--data", prData, "Source dataset directory")->required();
    pr->add_option("--classes", prK, "Class count K")->capture_default_str();
    pr->add_option("--bandwidth", prBandwidth, "Kernel sigma as a fraction of the image extent")->capture_default_str();
    pr->add_option("--resolution", prRes, "Raster resolution")->capture_default_str();
    pr->add_option("--out", prOut, "Output prior JSON (blob written next to it as .bin)")->required();

    // build-bank
    auto* bb = app.add_subcommand("build-bank", "Divide, score and index a dataset into a patch bank");
    std::string bbData, bbStats, bbOut, bbDomain = "source";
    int bbK = 19, bbR = 3, bbCols = 4, bbRows = 3, bbJobs = 1;
    bb->add_option("--data", bbData, "Dataset directory")->required();
    bb->add_option("--domain", bbDomain, "source or target")->capture_default_str();
    bb->add_option("--classes", bbK, "Class count K")->capture_default_str();
    bb->add_option("--groups", bbR, "Confidence group count R")->capture_default_str();
    bb->add_option("--cols", bbCols, "Grid columns W")->capture_default_str();
    bb->add_option("--rows", bbRows, "Grid rows H")->capture_default_str();
    bb->add_option("--stats", bbStats, "Stats JSON of the same dataset (difficulty)")->required();
    bb->add_option("--out", bbOut, "Bank directory")->required();
    bb->add_option("--jobs", bbJobs, "Worker threads")->capture_default_str();

    // mix
    auto* mx = app.add_subcommand("mix", "Bidirectional mixing of seeded random pairs");
    std::string mxConfig, mxOut, groupProbsArg;
    bdm::RunConfig cli;
    std::size_t mxCount = 0;
    int mxJobs = 1;
    bool mxPrint = false, mxNoBaseline = false;
    std::string ruleArg, selectionArg;
    mx->add_option("--config", mxConfig, "TOML config; flags override it");
    mx->add_option("--source", cli.paths.source, "Source dataset directory");
    mx->add_option("--target", cli.paths.target, "Target dataset directory");
    mx->add_option("--source-bank", cli.paths.sourceBank, "Source bank directory");
    mx->add_option("--target-bank", cli.paths.targetBank, "Target bank directory");
    mx->add_option("--stats", cli.paths.stats, "Source stats JSON (class balance)");
    mx->add_option("--prior", cli.paths.prior, "Source spatial prior JSON");
    mx->add_option("--out", mxOut, "Output directory");
    mx->add_option("--count", mxCount, "Number of pairs");
    mx->add_option("--jobs", mxJobs, "Worker threads")->capture_default_str();
    auto* oSeed = mx->add_option("--seed", cli.mix.seed, "Global seed");
    auto* oGamma = mx->add_option("--gamma", cli.mix.gamma, "Cutout threshold");
    auto* oAlpha = mx->add_option("--alpha", cli.mix.alpha, "Class-balance sharpening exponent");
    auto* oK = mx->add_option("--classes", cli.mix.numClasses, "Class count K");
    auto* oR = mx->add_option("--groups", cli.mix.numGroups, "Confidence group count R");
    auto* oGP = mx->add_option("--group-probs", groupProbsArg, "Comma-separated group probabilities, low to high");
    auto* oBoxes = mx->add_option("--cut-boxes", cli.mix.numCutBoxes, "Candidate cells per sample");
    auto* oCols = mx->add_option("--cols", cli.mix.gridCols, "Grid columns W");
    auto* oRows = mx->add_option("--rows", cli.mix.gridRows, "Grid rows H");
    auto* oBw = mx->add_option("--bandwidth", cli.mix.bandwidth, "Prior bandwidth (recorded in the config)");
    auto* oRule = mx->add_option("--spatial-rule", ruleArg, "prior-argmax or cut-region-dominant");
    auto* oSel = mx->add_option("--selection", selectionArg, "bdm or uniform");
    mx->add_flag("--print-config", mxPrint, "Print the resolved config and exit");
    mx->add_flag("--no-baseline", mxNoBaseline, "Skip the uniform-random shadow tally");

    // report
    auto* rp = app.add_subcommand("report", "Class supervision histogram and composites");
    std::string rpManifest, rpStats;
    bdm::ReportOptions rpOpt;
    rpOpt.composites = 8;
    rp->add_option("--manifest", rpManifest, "manifest.jsonl from mix")->required();
    rp->add_option("--stats", rpStats, "Source stats JSON")->required();
    rp->add_option("--out", rpOpt.outDir, "Report directory")->required();
    rp->add_option("--source", rpOpt.sourceDir, "Source dataset (for composites)");
    rp->add_option("--target", rpOpt.targetDir, "Target dataset (for composites)");
    rp->add_option("--composites", rpOpt.composites, "Maximum composites")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return static_cast<int>(bdm::ErrorKind::Config);
    }

    try {
        if (*pl) {
            const auto policy = plFixedOpt->count() > 0 ? bdm::ThresholdPolicy::fixed(plFixed)
                                                        : bdm::ThresholdPolicy::per_class_quantile(plQuantile);
            const auto n = bdm::cmd_pseudo_label(plData, policy, plThresholdsOut);
            std::cout << "pseudo-labeled " << n << " sample(s)\n";
        } else if (*st) {
            const auto s = bdm::cmd_stats(stData, stK, stOut);
            if (s.empty()) std::cerr << "warning: no labeled pixels found\n";
            std::cout << "wrote " << stOut << "\n";
        } else if (*pr) {
            bdm::cmd_prior(prData, prK, prBandwidth, prOut, prRes);
            std::cout << "wrote " << prOut << " and " << bdm::prior_blob_path(prOut) << "\n";
        } else if (*bb) {
            const auto bank =
                bdm::cmd_build_bank(bbData, bbCols, bbRows, bbK, bbR, bbStats, parse_domain(bbDomain), bbOut, bbJobs);
            std::cout << "bank: " << bank.patches().size() << " patches, " << bank.sequence_count() << " sequences ("
                      << bank.non_empty_sequence_count() << " non-empty)\n";
        } else if (*mx) {
            bdm::RunConfig rc;
            if (!mxConfig.empty()) rc = bdm::load_run_config(mxConfig);
            auto pick = [](std::string& dst, const std::string& src) {
                if (!src.empty()) dst = src;
            };
            pick(rc.paths.source, cli.paths.source);
            pick(rc.paths.target, cli.paths.target);
            pick(rc.paths.sourceBank, cli.paths.sourceBank);
            pick(rc.paths.targetBank, cli.paths.targetBank);
            pick(rc.paths.stats, cli.paths.stats);
            pick(rc.paths.prior, cli.paths.prior);
            if (oSeed->count()) rc.mix.seed = cli.mix.seed;
            if (oGamma->count()) rc.mix.gamma = cli.mix.gamma;
            if (oAlpha->count()) rc.mix.alpha = cli.mix.alpha;
            if (oK->count()) rc.mix.numClasses = cli.mix.numClasses;
            if (oR->count()) rc.mix.numGroups = cli.mix.numGroups;
            if (oBoxes->count()) rc.mix.numCutBoxes = cli.mix.numCutBoxes;
            if (oCols->count()) rc.mix.gridCols = cli.mix.gridCols;
            if (oRows->count()) rc.mix.gridRows = cli.mix.gridRows;
            if (oBw->count()) rc.mix.bandwidth = cli.mix.bandwidth;
            if (oRule->count()) rc.mix.spatialRule = bdm::parse_spatial_rule(ruleArg);
            if (oSel->count()) rc.mix.selection = bdm::parse_selection_mode(selectionArg);
            if (oGP->count()) {
                rc.mix.groupProbs.clear();
                std::stringstream ss(groupProbsArg);
                for (std::string tok; std::getline(ss, tok, ',');) {
                    try {
                        rc.mix.groupProbs.push_back(std::stod(tok));
                    } catch (const std::exception&) {
                        throw bdm::ConfigError("--group-probs: '" + tok + "' is not a number");
                    }
                }
            }
            if (mxPrint) {
                std::cout << bdm::format_run_config(rc);
                rc.mix.validate();
                return 0;
            }
            if (mxCount == 0) throw bdm::ConfigError("--count must be >= 1");
            const auto summary = bdm::cmd_mix(rc, {mxOut, mxCount, mxJobs, !mxNoBaseline});
            std::cout << "mixed " << summary.pairs << " pair(s), " << summary.cutCells << " cut cell(s)\n";
        } else if (*rp) {
            const auto r = bdm::cmd_report(rpManifest, rpStats, rpOpt);
            if (r.empty) std::cerr << "warning: manifest is empty; wrote an empty report\n";
            std::cout << "report: " << r.tally.records << " record(s), " << r.composites << " composite(s)\n";
        }
    } catch (const bdm::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return static_cast<int>(bdm::ErrorKind::Invariant);
    }
    return 0;
}
