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

// In-process surface for language bindings: bank handles plus a buffer-based
// mix_pair that runs exactly the engine's bdm_mix_pair. Arrays cross the
// boundary as contiguous row-major buffers with a declared shape and dtype:
//
//   image       uint8    [H, W, 3]
//   label       uint8    [H, W]
//   confidence  float32  [H, W]   (optional)

#pragma once

#include <cstddef>
#include <cstring>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bdm/mix.hpp"
#include "bdm/serialize.hpp"

namespace bdm::embed {

inline constexpr const char* kVersion = "1.0.0";
inline const char* version() { return kVersion; }

enum class DType { UInt8, Float32 };

struct BufferView {
    std::span<const std::byte> bytes;
    std::vector<std::int64_t> shape;
    DType dtype = DType::UInt8;
};

/// Read-only bank plus its crop directory; safe to share across threads.
class BankHandle {
public:
    explicit BankHandle(const std::string& dir)
        : bank_(std::make_shared<const PatchBank>(load_bank(dir))), pixels_(std::make_shared<const DirectoryPatchSource>(dir)) {}

    const PatchBank& bank() const noexcept { return *bank_; }
    const DirectoryPatchSource& pixels() const noexcept { return *pixels_; }

private:
    std::shared_ptr<const PatchBank> bank_;
    std::shared_ptr<const DirectoryPatchSource> pixels_;
};

inline BankHandle load_bank(const std::string& path) { return BankHandle(path); }

namespace detail {

inline void expect_shape(const BufferView& b, std::vector<std::int64_t> shape, DType dtype, const char* what) {
    if (b.dtype != dtype || b.shape != shape) throw DataError(std::string(what) + ": unexpected shape or dtype");
    std::size_t n = dtype == DType::Float32 ? 4 : 1;
    for (auto d : shape) n *= static_cast<std::size_t>(d);
    if (b.bytes.size() != n) throw DataError(std::string(what) + ": buffer size does not match its shape");
}

}  // namespace detail

/// Builds a validated Sample from boundary buffers; shape problems are DataErrors.
inline Sample sample_from_buffers(std::string id, const BufferView& image, const BufferView& label,
                                  const std::optional<BufferView>& confidence, int numClasses) {
    if (label.shape.size() != 2 || label.shape[0] <= 0 || label.shape[1] <= 0)
        throw DataError("label: expected shape [H, W]");
    const auto h = label.shape[0], w = label.shape[1];
    detail::expect_shape(image, {h, w, 3}, DType::UInt8, "image");
    detail::expect_shape(label, {h, w}, DType::UInt8, "label");
    Sample s;
    s.id = std::move(id);
    const auto* img = reinterpret_cast<const std::uint8_t*>(image.bytes.data());
    s.image = Image(static_cast<int>(w), static_cast<int>(h), std::vector<std::uint8_t>(img, img + image.bytes.size()));
    const auto* lbl = reinterpret_cast<const std::uint8_t*>(label.bytes.data());
    s.label = LabelMap(static_cast<int>(w), static_cast<int>(h), std::vector<std::uint8_t>(lbl, lbl + label.bytes.size()));
    if (confidence) {
        detail::expect_shape(*confidence, {h, w}, DType::Float32, "confidence");
        std::vector<float> conf(static_cast<std::size_t>(w * h));
        std::memcpy(conf.data(), confidence->bytes.data(), confidence->bytes.size());
        s.confidence = ConfidenceMap(static_cast<int>(w), static_cast<int>(h), std::move(conf));
    }
    require_valid(s, numClasses);
    return s;
}

struct MixedBuffers {
    std::vector<std::uint8_t> image;  // [H, W, 3]
    std::vector<std::uint8_t> label;  // [H, W]
    std::int64_t height = 0;
    std::int64_t width = 0;
    Json provenance;  // {"cut": ..., "provenance": [...]}, same fields as manifest lines
};

struct MixPairResult {
    MixedBuffers source;
    MixedBuffers target;
};

inline MixedBuffers to_buffers(const MixedSample& m) {
    MixedBuffers b;
    b.image.assign(m.image.data().begin(), m.image.data().end());
    b.label.assign(m.label.data().begin(), m.label.data().end());
    b.height = m.label.height();
    b.width = m.label.width();
    Json prov = Json::array();
    for (const auto& r : m.provenance) prov.push_back(to_json(r));
    b.provenance = {{"cut", to_json(m.plan)}, {"provenance", std::move(prov)}};
    return b;
}

/// Same computation as the CLI's per-pair step: Rng(seed) drives bdm_mix_pair.
inline MixPairResult mix_pair(const BankHandle& sourceBank, const BankHandle& targetBank, const Sample& src,
                              const Sample& tgt, const ClassStats& sourceStats, const SpatialPrior& prior,
                              const MixConfig& config, std::uint64_t seed) {
    Rng rng(seed);
    const MixedPair m = bdm_mix_pair(src, tgt, BankView<DirectoryPatchSource>{sourceBank.bank(), sourceBank.pixels()},
                                     BankView<DirectoryPatchSource>{targetBank.bank(), targetBank.pixels()},
                                     sourceStats, prior, config, rng);
    return {to_buffers(m.source), to_buffers(m.target)};
}

}  // namespace bdm::embed
