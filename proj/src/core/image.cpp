// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "matfuse/core/image.hpp"

#include <algorithm>
#include <cmath>

#include "matfuse/errors.hpp"

namespace matfuse {

ImageRGB::ImageRGB(std::size_t height, std::size_t width, double fill)
    : m_height(height), m_width(width), m_pixels(height * width * 3, fill) {}

ImageRGB::ImageRGB(std::size_t height, std::size_t width, std::vector<double> pixels)
    : m_height(height), m_width(width), m_pixels(std::move(pixels)) {
    if (m_pixels.size() != height * width * 3)
        throw ShapeError("image " + std::to_string(height) + "x" + std::to_string(width) + " given " +
                         std::to_string(m_pixels.size()) + " values");
}

void ImageRGB::validate_range() const {
    if (m_height == 0 || m_width == 0)
        throw ValidationError("image", "empty image");
    for (double v : m_pixels) {
        if (!(v >= 0.0 && v <= 1.0))
            throw ValidationError("image", "pixel value outside [0,1]");
    }
}

void ImageRGB::validate() const {
    if (m_height % kLatentDownscale || m_width % kLatentDownscale)
        throw ValidationError("image", "dimensions " + std::to_string(m_height) + "x" + std::to_string(m_width) +
                                           " are not divisible by " + std::to_string(kLatentDownscale));
    validate_range();
}

std::string to_string(MaskResolution resolution) {
    switch (resolution.space) {
        case MaskSpace::Pixel:
            return "pixel";
        case MaskSpace::Latent:
            return "latent";
        case MaskSpace::Attention:
            return "attention-level-" + std::to_string(resolution.level);
    }
    return "unknown";
}

BinaryMask::BinaryMask(std::size_t height, std::size_t width, std::uint8_t fill, MaskResolution resolution)
    : m_height(height), m_width(width), m_values(height * width, fill ? 1 : 0), m_resolution(resolution) {}

BinaryMask::BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> values,
                       MaskResolution resolution)
    : m_height(height), m_width(width), m_values(std::move(values)), m_resolution(resolution) {
    if (m_values.size() != height * width)
        throw ShapeError("mask " + std::to_string(height) + "x" + std::to_string(width) + " given " +
                         std::to_string(m_values.size()) + " values");
    for (std::uint8_t v : m_values) {
        if (v > 1)
            throw ValidationError("mask", "values must be 0 or 1");
    }
}

std::size_t BinaryMask::count() const {
    return static_cast<std::size_t>(std::count(m_values.begin(), m_values.end(), std::uint8_t{1}));
}

}  // namespace matfuse
