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

#include <set>

#include "bdm/core_types.hpp"
#include "bdm/rng.hpp"
#include "toy_data.hpp"

namespace bdm {
namespace {

Sample tiny(int w, int h) { return {"s", Image(w, h), LabelMap(w, h, 0), ConfidenceMap(w, h, 0.5f)}; }

TEST(ValidateSample, AcceptsWellFormed) { EXPECT_TRUE(validate_sample(tiny(4, 3), 19).empty()); }

TEST(ValidateSample, ReportsClassOutOfRange) {
    auto s = tiny(4, 3);
    s.label(1, 1) = 19;
    s.label(2, 1) = 30;
    s.label(3, 2) = kIgnore;  // IGNORE is always allowed
    auto v = validate_sample(s, 19);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0].kind, Violation::Kind::ClassOutOfRange);
    EXPECT_NE(v[0].message.find("2 pixel"), std::string::npos);
}

TEST(ValidateSample, ReportsDimensionMismatch) {
    auto s = tiny(4, 3);
    s.image = Image(4, 4);
    auto v = validate_sample(s, 19);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0].kind, Violation::Kind::DimensionMismatch);
    EXPECT_NE(v[0].message.find("image"), std::string::npos);
}

TEST(ValidateSample, ReportsConfidenceOutOfRange) {
    auto s = tiny(4, 3);
    (*s.confidence)(0, 0) = 1.5f;
    (*s.confidence)(1, 0) = std::nanf("");
    auto v = validate_sample(s, 19);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0].kind, Violation::Kind::ConfidenceOutOfRange);
    EXPECT_THROW(require_valid(s, 19), DataError);
}

TEST(Sample, MissingConfidenceReadsAsOne) {
    Sample s{"g", Image(2, 2), LabelMap(2, 2, 1), std::nullopt};
    EXPECT_FLOAT_EQ(s.confidence_at(1, 1), 1.0f);
}

TEST(Plane, RejectsMismatchedBuffer) {
    EXPECT_THROW(LabelMap(3, 3, std::vector<ClassId>(8)), DataError);
    EXPECT_THROW(Image(2, 2, std::vector<std::uint8_t>(11)), DataError);
}

TEST(GridSpec, CellsOfEightBySix) {
    auto g = GridSpec::for_image(8, 6, 4, 3);
    EXPECT_EQ(g.cell_width(), 2);
    EXPECT_EQ(g.cell_height(), 2);
    EXPECT_EQ(g.cell_rect(0), (Rect{0, 0, 2, 2}));
    EXPECT_EQ(g.cell_rect(5), (Rect{2, 2, 2, 2}));
    EXPECT_EQ(g.cell_rect(11), (Rect{6, 4, 2, 2}));
    auto [cx, cy] = g.normalized_center(0);
    EXPECT_DOUBLE_EQ(cx, 1.0 / 8);
    EXPECT_DOUBLE_EQ(cy, 1.0 / 6);
    EXPECT_THROW(g.cell_rect(12), DataError);
}

TEST(GridSpec, RejectsTooSmallImage) {
    EXPECT_THROW(GridSpec::for_image(3, 6, 4, 3), DataError);
    EXPECT_THROW(GridSpec::for_image(8, 6, 0, 3), ConfigError);
}

// Property: cells are pairwise disjoint, equal-sized, inside the image, and
// cover everything except the right/bottom remainder strips.
TEST(GridSpec, PropertyDisjointCover) {
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        const int cols = 1 + static_cast<int>(rng.uniform_index(6));
        const int rows = 1 + static_cast<int>(rng.uniform_index(6));
        const int w = cols + static_cast<int>(rng.uniform_index(40));
        const int h = rows + static_cast<int>(rng.uniform_index(40));
        auto g = GridSpec::for_image(w, h, cols, rows);
        std::vector<int> owner(static_cast<std::size_t>(w * h), -1);
        for (int i = 0; i < g.cell_count(); ++i) {
            Rect r = g.cell_rect(i);
            ASSERT_EQ(r.width, w / cols);
            ASSERT_EQ(r.height, h / rows);
            for (int y = r.y; y < r.y + r.height; ++y)
                for (int x = r.x; x < r.x + r.width; ++x) {
                    ASSERT_LT(x, w);
                    ASSERT_LT(y, h);
                    ASSERT_EQ(owner[static_cast<std::size_t>(y * w + x)], -1);
                    owner[static_cast<std::size_t>(y * w + x)] = i;
                }
        }
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const bool inRemainder = x >= cols * (w / cols) || y >= rows * (h / rows);
                ASSERT_EQ(owner[static_cast<std::size_t>(y * w + x)] == -1, inRemainder);
            }
    }
}

TEST(MixConfig, DefaultsAreValid) {
    MixConfig c;
    EXPECT_NO_THROW(c.validate());
    EXPECT_DOUBLE_EQ(c.gamma, 0.2);
    EXPECT_DOUBLE_EQ(c.alpha, 2.0);
    EXPECT_EQ(c.gridCols, 4);
    EXPECT_EQ(c.gridRows, 3);
    EXPECT_EQ(c.numCutBoxes, 4);
    EXPECT_EQ(c.numGroups, 3);
    EXPECT_EQ(c.groupProbs, (std::vector<double>{0.1, 0.3, 0.6}));
}

TEST(MixConfig, RejectsBadValues) {
    auto bad = [](auto mutate) {
        MixConfig c;
        mutate(c);
        EXPECT_THROW(c.validate(), ConfigError);
    };
    bad([](MixConfig& c) { c.gamma = 1.5; });
    bad([](MixConfig& c) { c.alpha = -1; });
    bad([](MixConfig& c) { c.numClasses = 0; });
    bad([](MixConfig& c) { c.numClasses = 255; });
    bad([](MixConfig& c) { c.groupProbs = {0.5, 0.5}; });
    bad([](MixConfig& c) { c.groupProbs = {0.2, 0.2, 0.2}; });
    bad([](MixConfig& c) { c.groupProbs = {-0.1, 0.5, 0.6}; });
    bad([](MixConfig& c) { c.numCutBoxes = 13; });
    bad([](MixConfig& c) { c.bandwidth = -0.1; });
}

TEST(Rng, DeterministicAndDerivedStreamsDiffer) {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) ASSERT_EQ(a.next(), b.next());
    EXPECT_NE(Rng::derive(42, 0).next(), Rng::derive(42, 1).next());
    EXPECT_NE(Rng::derive(42, 0, 1).next(), Rng::derive(42, 0, 2).next());
}

TEST(Rng, UniformIndexIsInRangeAndCoversAll) {
    Rng r(3);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 2000; ++i) {
        auto v = r.uniform_index(7);
        ASSERT_LT(v, 7u);
        seen.insert(v);
        auto u = r.uniform01();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
    }
    EXPECT_EQ(seen.size(), 7u);
}

}  // namespace
}  // namespace bdm
