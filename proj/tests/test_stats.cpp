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


#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "bdm/rng.hpp"
#include "bdm/stats.hpp"
#include "toy_data.hpp"

namespace bdm {
namespace {

// Independent class-balance oracle in long double.
std::vector<double> cb_oracle(const std::vector<std::uint64_t>& n, double alpha) {
    long double total = 0;
    for (auto v : n) total += v;
    std::vector<long double> w(n.size(), 0);
    long double s = 0;
    for (std::size_t i = 0; i < n.size(); ++i)
        if (n[i] > 0) s += w[i] = std::pow(-std::log(n[i] / total), static_cast<long double>(alpha));
    std::vector<double> out(n.size());
    for (std::size_t i = 0; i < n.size(); ++i) out[i] = static_cast<double>(w[i] / s);
    return out;
}

TEST(ClassBalance, HandComputedExample) {
    // N = {1, 1, 2}: shares 1/4, 1/4, 1/2 -> weights (ln4)^2, (ln4)^2, (ln2)^2 = 4:4:1.
    std::vector<std::uint64_t> n{1, 1, 2};
    auto p = class_balance_probs(n, 2.0);
    EXPECT_NEAR(p[0], 4.0 / 9, 1e-15);
    EXPECT_NEAR(p[1], 4.0 / 9, 1e-15);
    EXPECT_NEAR(p[2], 1.0 / 9, 1e-15);
}

TEST(ClassBalance, MatchesOracleOnRandomCounts) {
    Rng rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::uint64_t> n(1 + rng.uniform_index(30));
        for (auto& v : n) v = rng.uniform_index(4) == 0 ? 0 : 1 + rng.uniform_index(1'000'000);
        if (std::accumulate(n.begin(), n.end(), std::uint64_t{0}) == 0) n[0] = 5;
        if (std::count_if(n.begin(), n.end(), [](auto v) { return v > 0; }) < 2) n.push_back(3);
        const double alpha = rng.uniform01() * 4;
        auto got = class_balance_probs(n, alpha);
        auto want = cb_oracle(n, alpha);
        for (std::size_t i = 0; i < n.size(); ++i) ASSERT_NEAR(got[i], want[i], 1e-12);
    }
}

TEST(ClassBalance, ZeroCountsAndSingleClass) {
    std::vector<std::uint64_t> n{0, 10, 0, 30};
    auto p = class_balance_probs(n, 2.0);
    EXPECT_EQ(p[0], 0.0);
    EXPECT_EQ(p[2], 0.0);
    EXPECT_NEAR(p[1] + p[3], 1.0, 1e-15);
    EXPECT_GT(p[1], p[3]);

    std::vector<std::uint64_t> one{0, 7, 0};
    EXPECT_EQ(class_balance_probs(one, 2.0), (std::vector<double>{0, 1, 0}));
    std::vector<std::uint64_t> none{0, 0};
    EXPECT_THROW(class_balance_probs(none, 2.0), DataError);
}

// Property: the distribution depends only on shares, so scaling all counts
// leaves it unchanged, and alpha = 0 gives uniform over present classes.
TEST(ClassBalance, PropertyScaleInvariantAndAlphaZeroUniform) {
    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::uint64_t> n(2 + rng.uniform_index(10));
        for (auto& v : n) v = 1 + rng.uniform_index(1000);
        auto scaled = n;
        const auto f = 1 + rng.uniform_index(1000);
        for (auto& v : scaled) v *= f;
        auto a = class_balance_probs(n, 2.0), b = class_balance_probs(scaled, 2.0);
        for (std::size_t i = 0; i < n.size(); ++i) ASSERT_NEAR(a[i], b[i], 1e-12);
        auto u = class_balance_probs(n, 0.0);
        for (double v : u) ASSERT_NEAR(v, 1.0 / n.size(), 1e-12);
    }
}

TEST(ClassBalance, RarerClassGetsMoreMass) {
    std::vector<std::uint64_t> n{900, 90, 10};
    auto p = class_balance_probs(n, 2.0);
    EXPECT_LT(p[0], p[1]);
    EXPECT_LT(p[1], p[2]);
}

TEST(PixelCounts, CountsLabeledOnly) {
    LabelMap a(3, 2, 0);
    a(0, 0) = kIgnore;
    a(1, 0) = 2;
    std::vector<LabelMap> maps{a, LabelMap(2, 2, 1)};
    auto c = class_pixel_counts(maps, 3);
    EXPECT_EQ(c.counts, (std::vector<std::uint64_t>{4, 4, 1}));
    EXPECT_EQ(c.total(), 9u);
    std::vector<LabelMap> none{LabelMap(2, 2, kIgnore)};
    EXPECT_TRUE(class_pixel_counts(none, 3).empty());
    std::vector<LabelMap> bad{LabelMap(1, 1, 5)};
    EXPECT_THROW(class_pixel_counts(bad, 3), DataError);
}

TEST(Difficulty, MatchesDirectMeans) {
    auto ds = toy::random_dataset(3, "d", 4, 20, 16, 5, 2);
    auto d = class_difficulty(ds, 6);  // class 5 absent
    std::vector<double> sum(6, 0);
    std::vector<double> n(6, 0);
    double all = 0, allN = 0;
    for (const auto& s : ds)
        for (int y = 0; y < s.height(); ++y)
            for (int x = 0; x < s.width(); ++x) {
                auto c = s.label(x, y);
                if (c == kIgnore) continue;
                sum[c] += (*s.confidence)(x, y);
                n[c] += 1;
                all += (*s.confidence)(x, y);
                allN += 1;
            }
    for (int c = 0; c < 5; ++c) {
        if (n[c] > 0) {
            EXPECT_NEAR(d.perClass[c], sum[c] / n[c], 1e-9);
        }
    }
    EXPECT_NEAR(d.globalMean, all / allN, 1e-9);
    EXPECT_DOUBLE_EQ(d.perClass[5], d.globalMean);
}

// --- spatial prior ---------------------------------------------------------

// Oracle: per-bin class frequency with bins assigned by pixel centers, then a
// direct 2D Gaussian sum evaluated at each node.
std::vector<double> prior_oracle(const std::vector<LabelMap>& maps, int k, double bw, int res) {
    std::vector<double> cnt(static_cast<std::size_t>(k * res * res), 0), tot(static_cast<std::size_t>(res * res), 0);
    for (const auto& m : maps)
        for (int y = 0; y < m.height(); ++y)
            for (int x = 0; x < m.width(); ++x) {
                const int bx = static_cast<int>(std::floor((x + 0.5) / m.width() * res));
                const int by = static_cast<int>(std::floor((y + 0.5) / m.height() * res));
                tot[static_cast<std::size_t>(by * res + bx)] += 1;
                if (m(x, y) != kIgnore) cnt[static_cast<std::size_t>((m(x, y) * res + by) * res + bx)] += 1;
            }
    std::vector<double> out(cnt.size(), 0);
    const double s = bw * res;
    for (int c = 0; c < k; ++c)
        for (int y = 0; y < res; ++y)
            for (int x = 0; x < res; ++x) {
                double acc = 0;
                for (int sy = 0; sy < res; ++sy)
                    for (int sx = 0; sx < res; ++sx) {
                        const double t = tot[static_cast<std::size_t>(sy * res + sx)];
                        if (t == 0) continue;
                        const double f = cnt[static_cast<std::size_t>((c * res + sy) * res + sx)] / t;
                        const double d2 = (x - sx) * (x - sx) + (y - sy) * (y - sy);
                        acc += f * (s == 0 ? (d2 == 0 ? 1.0 : 0.0) : std::exp(-d2 / (2 * s * s)));
                    }
                out[static_cast<std::size_t>((c * res + y) * res + x)] = acc;
            }
    return out;
}

std::vector<LabelMap> random_maps(std::uint64_t seed, std::size_t n, int w, int h, int k) {
    std::vector<LabelMap> out;
    for (const auto& s : toy::random_dataset(seed, "p", n, w, h, k, 1)) out.push_back(s.label);
    return out;
}

TEST(SpatialPrior, MatchesDirectGaussianOracle) {
    auto maps = random_maps(4, 5, 64, 64, 3);
    for (double bw : {0.0, 0.05, 0.1}) {
        auto p = build_spatial_prior(maps, 3, bw, 16);
        auto want = prior_oracle(maps, 3, bw, 16);
        ASSERT_EQ(p.values().size(), want.size());
        for (std::size_t i = 0; i < want.size(); ++i) ASSERT_NEAR(p.values()[i], want[i], 1e-9 * (1 + want[i]));
    }
}

TEST(SpatialPrior, NonSquareImagesUseCenterBins) {
    auto maps = random_maps(5, 3, 37, 23, 4);
    auto p = build_spatial_prior(maps, 4, 0.07, 8);
    auto want = prior_oracle(maps, 4, 0.07, 8);
    for (std::size_t i = 0; i < want.size(); ++i) ASSERT_NEAR(p.values()[i], want[i], 1e-9 * (1 + want[i]));
}

TEST(SpatialPrior, OrderIndependent) {
    auto maps = random_maps(6, 8, 40, 30, 4);
    auto a = build_spatial_prior(maps, 4, 0.1, 32);
    std::reverse(maps.begin(), maps.end());
    auto b = build_spatial_prior(maps, 4, 0.1, 32);
    EXPECT_TRUE(a == b);
}

TEST(SpatialPrior, ZeroBandwidthIsFrequency) {
    LabelMap m(4, 4, 0);
    toy::fill_rect(m, 0, 0, 4, 2, 1);
    std::vector<LabelMap> maps{m};
    auto p = build_spatial_prior(maps, 2, 0.0, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            EXPECT_EQ(p.node(1, x, y), y < 2 ? 1.0 : 0.0);
            EXPECT_EQ(p.node(0, x, y), y < 2 ? 0.0 : 1.0);
        }
}

TEST(SpatialPrior, BilinearLookup) {
    std::vector<double> v{0, 1, 2, 3};  // res 2: nodes at 0.25 and 0.75
    SpatialPrior p(1, 2, 0.0, v);
    EXPECT_DOUBLE_EQ(p.at(0, 0.25, 0.25), 0.0);
    EXPECT_DOUBLE_EQ(p.at(0, 0.75, 0.75), 3.0);
    EXPECT_DOUBLE_EQ(p.at(0, 0.5, 0.25), 0.5);
    EXPECT_DOUBLE_EQ(p.at(0, 0.5, 0.5), 1.5);
    EXPECT_DOUBLE_EQ(p.at(0, 0.0, 1.0), 2.0);  // clamped
    EXPECT_THROW(p.at(1, 0.5, 0.5), DataError);
}

TEST(SpatialPrior, TopBandClassPeaksAtTop) {
    Rng rng(8);
    std::vector<LabelMap> maps;
    for (int i = 0; i < 20; ++i) maps.push_back(toy::sky_sample(rng, "s").label);
    auto p = build_spatial_prior(maps, 3, 0.1);
    EXPECT_GT(p.at(2, 0.5, 0.1), p.at(2, 0.5, 0.9) * 10);
    EXPECT_GT(p.at(0, 0.5, 0.9), p.at(0, 0.5, 0.1) * 10);
    EXPECT_TRUE(build_spatial_prior(maps, 4, 0.1).is_empty(3));
}

TEST(SpatialPrior, Errors) {
    std::vector<LabelMap> none;
    EXPECT_THROW(build_spatial_prior(none, 3, 0.1), DataError);
    std::vector<LabelMap> one{LabelMap(2, 2, 0)};
    EXPECT_THROW(build_spatial_prior(one, 3, -0.1), ConfigError);
}

}  // namespace
}  // namespace bdm
