// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "matfuse/core/image.hpp"
#include "matfuse/eval/safetensors.hpp"

namespace matfuse::eval {

/// Learned perceptual image patch similarity over an AlexNet feature stack
/// (relu1..relu5), unit-normalized per position, squared differences weighted
/// by non-negative 1x1 linear heads, spatially averaged and summed.
///
/// Weight keys: features.{0,3,6,8,10}.{weight,bias} (torchvision AlexNet) and
/// lin{0..4}.weight (shape 1 x C x 1 x 1).
class Lpips {
public:
    static constexpr std::size_t kLayers = 5;

    explicit Lpips(const TensorMap& weights, std::string source = "in-memory");

    /// Throws BackendError("lpips", ...) when the file is missing or incomplete.
    static Lpips load(const std::filesystem::path& path);

    /// Resolves MATFUSE_LPIPS_WEIGHTS, then $MATFUSE_WEIGHTS_DIR/lpips_alex.safetensors.
    static std::optional<std::filesystem::path> default_weights_path();

    /// Inputs in [0, 1], equal dims, at least 32 px per side. Symmetric, zero on identical inputs.
    double distance(const ImageRGB& a, const ImageRGB& b) const;

    /// Per-layer contributions; they sum to distance().
    std::array<double, kLayers> layer_distances(const ImageRGB& a, const ImageRGB& b) const;

    const std::string& source() const { return m_source; }

private:
    struct Conv {
        std::size_t out = 0, in = 0, kernel = 0, stride = 1, pad = 0;
        std::vector<float> weight;  // out x (in * k * k)
        std::vector<float> bias;
    };
    struct FeatureMap {
        std::size_t channels = 0, height = 0, width = 0;
        std::vector<float> data;  // C x H x W
    };

    std::array<FeatureMap, kLayers> features(const ImageRGB& image) const;

    std::array<Conv, kLayers> m_convs;
    std::array<std::vector<float>, kLayers> m_lin;
    std::string m_source;
};

}  // namespace matfuse::eval
