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

// TOML run configuration. Top-level [mix] mirrors MixConfig; [paths] names
// the datasets and artifacts. Missing keys keep their defaults.

#pragma once

#include <optional>
#include <sstream>
#include <string>

#include <toml.hpp>

#include "bdm/core_types.hpp"
#include "bdm/serialize.hpp"

namespace bdm {

struct RunPaths {
    std::string source;
    std::string target;
    std::string sourceBank;
    std::string targetBank;
    std::string stats;
    std::string prior;
};

struct RunConfig {
    MixConfig mix;
    RunPaths paths;
};

namespace detail {

template <typename T>
void read_key(const toml::table& t, const char* key, T& out) {
    const toml::node* n = t.get(key);
    if (!n) return;
    if constexpr (std::is_same_v<T, double>) {
        if (auto v = n->value<double>()) {
            out = *v;
            return;
        }
    } else if constexpr (std::is_same_v<T, std::string>) {
        if (auto v = n->value<std::string>()) {
            out = *v;
            return;
        }
    } else {
        if (auto v = n->value<std::int64_t>()) {
            if (*v < 0 && std::is_unsigned_v<T>) throw ConfigError(std::string("config key '") + key + "' must be >= 0");
            out = static_cast<T>(*v);
            return;
        }
    }
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
}

}  // namespace detail

inline RunConfig parse_run_config(const std::string& text, const std::string& what = "config") {
    toml::table root;
    try {
        root = toml::parse(text, what);
    } catch (const toml::parse_error& e) {
        std::ostringstream os;
        os << what << ": " << e.description() << " (line " << e.source().begin.line << ")";
        throw ConfigError(os.str());
    }
    RunConfig rc;
    if (const toml::table* mix = root["mix"].as_table()) {
        MixConfig& m = rc.mix;
        detail::read_key(*mix, "gamma", m.gamma);
        detail::read_key(*mix, "alpha", m.alpha);
        detail::read_key(*mix, "num_classes", m.numClasses);
        detail::read_key(*mix, "num_groups", m.numGroups);
        detail::read_key(*mix, "num_cut_boxes", m.numCutBoxes);
        detail::read_key(*mix, "seed", m.seed);
        detail::read_key(*mix, "grid_cols", m.gridCols);
        detail::read_key(*mix, "grid_rows", m.gridRows);
        detail::read_key(*mix, "bandwidth", m.bandwidth);
        std::string rule = to_string(m.spatialRule), mode = to_string(m.selection);
        detail::read_key(*mix, "spatial_rule", rule);
        detail::read_key(*mix, "selection", mode);
        m.spatialRule = parse_spatial_rule(rule);
        m.selection = parse_selection_mode(mode);
        if (const toml::node* gp = mix->get("group_probs")) {
            const toml::array* arr = gp->as_array();
            if (!arr) throw ConfigError("config key 'group_probs' must be an array");
            m.groupProbs.clear();
            for (const auto& e : *arr) {
                auto v = e.value<double>();
                if (!v) throw ConfigError("config key 'group_probs' must hold numbers");
                m.groupProbs.push_back(*v);
            }
        }
    }
    if (const toml::table* p = root["paths"].as_table()) {
        detail::read_key(*p, "source", rc.paths.source);
        detail::read_key(*p, "target", rc.paths.target);
        detail::read_key(*p, "source_bank", rc.paths.sourceBank);
        detail::read_key(*p, "target_bank", rc.paths.targetBank);
        detail::read_key(*p, "stats", rc.paths.stats);
        detail::read_key(*p, "prior", rc.paths.prior);
    }
    return rc;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_run_config(ss.str(), path);
}

/// Fully resolved config as TOML text (what --print-config echoes).
inline std::string format_run_config(const RunConfig& rc) {
    const MixConfig& m = rc.mix;
    toml::array probs;
    for (double p : m.groupProbs) probs.push_back(p);
    toml::table mix{{"gamma", m.gamma},
                    {"alpha", m.alpha},
                    {"num_classes", m.numClasses},
                    {"num_groups", m.numGroups},
                    {"group_probs", probs},
                    {"num_cut_boxes", m.numCutBoxes},
                    {"seed", static_cast<std::int64_t>(m.seed)},
                    {"grid_cols", m.gridCols},
                    {"grid_rows", m.gridRows},
                    {"bandwidth", m.bandwidth},
                    {"spatial_rule", to_string(m.spatialRule)},
                    {"selection", to_string(m.selection)}};
    toml::table paths{{"source", rc.paths.source},         {"target", rc.paths.target},
                      {"source_bank", rc.paths.sourceBank}, {"target_bank", rc.paths.targetBank},
                      {"stats", rc.paths.stats},            {"prior", rc.paths.prior}};
    toml::table root{{"mix", mix}, {"paths", paths}};
    std::ostringstream os;
    os << root << "\n";
    return os.str();
}

}  // namespace bdm
