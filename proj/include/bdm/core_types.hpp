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

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bdm {

using ClassId = std::uint8_t;

/// Reserved label value for pixels excluded from supervision.
inline constexpr ClassId kIgnore = 255;
inline constexpr int kMaxClasses = 254;

// ---------------------------------------------------------------------------
// Errors. The kind maps one-to-one onto CLI exit codes.
// ---------------------------------------------------------------------------

enum class ErrorKind : int { Config = 2, Data = 3, Invariant = 4 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};
struct DataError : Error {
    explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};
struct InvariantError : Error {
    explicit InvariantError(const std::string& what) : Error(ErrorKind::Invariant, what) {}
};

// ---------------------------------------------------------------------------
// Pixel planes
// ---------------------------------------------------------------------------

/// Row-major single-channel plane.
template <typename T>
class Plane {
public:
    using value_type = T;

    Plane() = default;
    Plane(int width, int height, T fill = T{})
        : width_(width), height_(height), data_(checked_area(width, height), fill) {}
    Plane(int width, int height, std::vector<T> data)
        : width_(width), height_(height), data_(std::move(data)) {
        if (data_.size() != checked_area(width, height))
            throw DataError("plane data size does not match " + std::to_string(width) + "x" +
                            std::to_string(height));
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(int x, int y) { return data_[index(x, y)]; }
    const T& operator()(int x, int y) const { return data_[index(x, y)]; }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }

    bool operator==(const Plane&) const = default;

private:
    static std::size_t checked_area(int w, int h) {
        if (w < 0 || h < 0) throw DataError("negative plane dimensions");
        return static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    }
    std::size_t index(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

using LabelMap = Plane<ClassId>;
using ConfidenceMap = Plane<float>;

/// Interleaved 8-bit RGB image.
class Image {
public:
    static constexpr int kChannels = 3;

    Image() = default;
    Image(int width, int height, std::uint8_t fill = 0)
        : width_(width), height_(height),
          data_(static_cast<std::size_t>(width) * height * kChannels, fill) {
        if (width < 0 || height < 0) throw DataError("negative image dimensions");
    }
    Image(int width, int height, std::vector<std::uint8_t> rgb)
        : width_(width), height_(height), data_(std::move(rgb)) {
        if (width < 0 || height < 0 ||
            data_.size() != static_cast<std::size_t>(width) * height * kChannels)
            throw DataError("image buffer size does not match dimensions");
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int channels() const noexcept { return kChannels; }

    std::uint8_t* pixel(int x, int y) { return data_.data() + offset(x, y); }
    const std::uint8_t* pixel(int x, int y) const { return data_.data() + offset(x, y); }

    std::span<std::uint8_t> data() noexcept { return data_; }
    std::span<const std::uint8_t> data() const noexcept { return data_; }

    bool operator==(const Image&) const = default;

private:
    std::size_t offset(int x, int y) const noexcept {
        return (static_cast<std::size_t>(y) * width_ + x) * kChannels;
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> data_;
};

struct Rect {
    int x = 0;
    int y = 0;
    int width = 0;
    int height = 0;

    long long area() const noexcept { return static_cast<long long>(width) * height; }
    bool contains(int px, int py) const noexcept {
        return px >= x && px < x + width && py >= y && py < y + height;
    }
    bool operator==(const Rect&) const = default;
};

/// One aligned (image, label, confidence) triple. Confidence is optional for
/// ground-truth labels and then reads as 1.0 everywhere.
struct Sample {
    std::string id;
    Image image;
    LabelMap label;
    std::optional<ConfidenceMap> confidence;

    int width() const noexcept { return label.width(); }
    int height() const noexcept { return label.height(); }

    float confidence_at(int x, int y) const { return confidence ? (*confidence)(x, y) : 1.0f; }

    bool operator==(const Sample&) const = default;
};

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

/// W x H division of an image into equal cells. Remainder pixels on the
/// right/bottom edges belong to no cell, so every cell has the same size.
class GridSpec {
public:
    GridSpec() = default;

    static GridSpec for_image(int imageWidth, int imageHeight, int cols, int rows) {
        if (cols < 1 || rows < 1) throw ConfigError("grid needs at least one column and one row");
        GridSpec g;
        g.cols_ = cols;
        g.rows_ = rows;
        g.imageWidth_ = imageWidth;
        g.imageHeight_ = imageHeight;
        g.cellWidth_ = imageWidth / cols;
        g.cellHeight_ = imageHeight / rows;
        if (g.cellWidth_ < 1 || g.cellHeight_ < 1)
            throw DataError("image " + std::to_string(imageWidth) + "x" +
                            std::to_string(imageHeight) + " is smaller than one grid cell");
        return g;
    }

    int cols() const noexcept { return cols_; }
    int rows() const noexcept { return rows_; }
    int cell_width() const noexcept { return cellWidth_; }
    int cell_height() const noexcept { return cellHeight_; }
    int image_width() const noexcept { return imageWidth_; }
    int image_height() const noexcept { return imageHeight_; }
    int cell_count() const noexcept { return cols_ * rows_; }

    /// Row-major: index = row * cols + col.
    Rect cell_rect(int index) const {
        check_index(index);
        return {(index % cols_) * cellWidth_, (index / cols_) * cellHeight_, cellWidth_,
                cellHeight_};
    }

    /// Cell center in normalized [0,1]^2 image coordinates (x, y).
    std::pair<double, double> normalized_center(int index) const {
        const Rect r = cell_rect(index);
        return {(r.x + 0.5 * r.width) / imageWidth_, (r.y + 0.5 * r.height) / imageHeight_};
    }

    bool same_layout(const GridSpec& o) const noexcept {
        return cols_ == o.cols_ && rows_ == o.rows_ && cellWidth_ == o.cellWidth_ &&
               cellHeight_ == o.cellHeight_;
    }

    bool operator==(const GridSpec&) const = default;

private:
    void check_index(int index) const {
        if (index < 0 || index >= cell_count())
            throw DataError("cell index " + std::to_string(index) + " out of range");
    }

    int cols_ = 1;
    int rows_ = 1;
    int cellWidth_ = 0;
    int cellHeight_ = 0;
    int imageWidth_ = 0;
    int imageHeight_ = 0;
};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// How the class whose spatial prior drives location sampling is chosen.
enum class SpatialClassRule {
    PriorArgmax,        // argmax_c SC_c(cut center)
    CutRegionDominant,  // most frequent labeled class inside the cut cell
};

enum class SelectionMode {
    Bdm,            // P_CB x P_SC x P_PC
    UniformRandom,  // any bank patch with equal probability
};

struct MixConfig {
    double gamma = 0.2;
    double alpha = 2.0;
    int numClasses = 19;
    int numGroups = 3;
    std::vector<double> groupProbs{0.1, 0.3, 0.6};
    int numCutBoxes = 4;
    std::uint64_t seed = 0;
    int gridCols = 4;
    int gridRows = 3;
    double bandwidth = 0.1;
    SpatialClassRule spatialRule = SpatialClassRule::PriorArgmax;
    SelectionMode selection = SelectionMode::Bdm;

    /// Throws ConfigError on the first violated constraint.
    void validate() const {
        auto fail = [](const std::string& m) { throw ConfigError(m); };
        if (!(gamma >= 0.0 && gamma <= 1.0)) fail("gamma must lie in [0, 1]");
        if (!(alpha >= 0.0) || !std::isfinite(alpha)) fail("alpha must be >= 0");
        if (numClasses < 1 || numClasses > kMaxClasses)
            fail("class count must lie in [1, " + std::to_string(kMaxClasses) + "]");
        if (numGroups < 1) fail("confidence group count must be >= 1");
        if (static_cast<int>(groupProbs.size()) != numGroups)
            fail("group probability count must equal the confidence group count");
        double sum = 0.0;
        for (double p : groupProbs) {
            if (!(p >= 0.0)) fail("group probabilities must be non-negative");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9) fail("group probabilities must sum to 1");
        if (gridCols < 1 || gridRows < 1) fail("grid must have at least one column and row");
        if (numCutBoxes < 0 || numCutBoxes > gridCols * gridRows)
            fail("cut box count must lie in [0, W*H]");
        if (!(bandwidth >= 0.0) || !std::isfinite(bandwidth)) fail("bandwidth must be >= 0");
    }
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct Violation {
    enum class Kind { ClassOutOfRange, DimensionMismatch, ConfidenceOutOfRange };
    Kind kind;
    std::string message;
};

/// Report-style check; an empty result means the sample is valid for K classes.
inline std::vector<Violation> validate_sample(const Sample& sample, int numClasses) {
    std::vector<Violation> out;
    const int w = sample.label.width();
    const int h = sample.label.height();

    if (sample.image.width() != w || sample.image.height() != h)
        out.push_back({Violation::Kind::DimensionMismatch, "dimension mismatch: image vs label"});
    if (sample.confidence && (sample.confidence->width() != w || sample.confidence->height() != h))
        out.push_back(
            {Violation::Kind::DimensionMismatch, "dimension mismatch: confidence vs label"});

    std::size_t badClass = 0;
    for (ClassId v : sample.label.data())
        if (v != kIgnore && v >= numClasses) ++badClass;
    if (badClass > 0)
        out.push_back({Violation::Kind::ClassOutOfRange,
                       "class id out of range: " + std::to_string(badClass) + " pixel(s)"});

    if (sample.confidence) {
        std::size_t badConf = 0;
        for (float c : sample.confidence->data())
            if (!(c >= 0.0f && c <= 1.0f)) ++badConf;
        if (badConf > 0)
            out.push_back({Violation::Kind::ConfidenceOutOfRange,
                           "confidence out of [0,1]: " + std::to_string(badConf) + " pixel(s)"});
    }
    return out;
}

/// Throwing form of validate_sample for pipeline entry points.
inline void require_valid(const Sample& sample, int numClasses) {
    auto report = validate_sample(sample, numClasses);
    if (!report.empty()) throw DataError("sample '" + sample.id + "': " + report.front().message);
}

}  // namespace bdm
