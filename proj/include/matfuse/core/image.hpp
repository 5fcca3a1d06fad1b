// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace matfuse {

inline constexpr std::size_t kLatentDownscale = 8;
inline constexpr std::size_t kDefaultImageSize = 512;

/// H x W x 3 RGB image, interleaved, values in [0, 1].
class ImageRGB {
public:
    ImageRGB() = default;
    ImageRGB(std::size_t height, std::size_t width, double fill = 0.0);
    ImageRGB(std::size_t height, std::size_t width, std::vector<double> pixels);

    std::size_t height() const { return m_height; }
    std::size_t width() const { return m_width; }
    bool empty() const { return m_pixels.empty(); }

    double& at(std::size_t y, std::size_t x, std::size_t c) { return m_pixels[(y * m_width + x) * 3 + c]; }
    double at(std::size_t y, std::size_t x, std::size_t c) const { return m_pixels[(y * m_width + x) * 3 + c]; }

    const std::vector<double>& pixels() const { return m_pixels; }
    std::vector<double>& pixels() { return m_pixels; }

    /// Checks the [0,1] range and the latent-downscale divisibility.
    void validate() const;
    /// Checks non-emptiness and the [0,1] range only.
    void validate_range() const;

    friend bool operator==(const ImageRGB&, const ImageRGB&) = default;

private:
    std::size_t m_height = 0;
    std::size_t m_width = 0;
    std::vector<double> m_pixels;
};

enum class MaskSpace { Pixel, Latent, Attention };

struct MaskResolution {
    MaskSpace space = MaskSpace::Pixel;
    int level = 0;  // attention level index, only meaningful for MaskSpace::Attention

    friend bool operator==(const MaskResolution&, const MaskResolution&) = default;
};

std::string to_string(MaskResolution resolution);

/// Strictly binary H x W mask. 1 marks the object.
class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(std::size_t height, std::size_t width, std::uint8_t fill = 0,
               MaskResolution resolution = {});
    BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> values,
               MaskResolution resolution = {});

    std::size_t height() const { return m_height; }
    std::size_t width() const { return m_width; }
    std::size_t size() const { return m_values.size(); }
    const MaskResolution& resolution() const { return m_resolution; }
    void set_resolution(MaskResolution r) { m_resolution = r; }

    std::uint8_t& at(std::size_t y, std::size_t x) { return m_values[y * m_width + x]; }
    std::uint8_t at(std::size_t y, std::size_t x) const { return m_values[y * m_width + x]; }
    std::uint8_t operator[](std::size_t i) const { return m_values[i]; }
    const std::vector<std::uint8_t>& values() const { return m_values; }

    std::size_t count() const;
    bool any() const { return count() > 0; }

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

private:
    std::size_t m_height = 0;
    std::size_t m_width = 0;
    std::vector<std::uint8_t> m_values;
    MaskResolution m_resolution;
};

}  // namespace matfuse
