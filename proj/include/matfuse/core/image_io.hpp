// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "matfuse/core/image.hpp"
#include "matfuse/core/mask.hpp"

namespace matfuse {

/// PNG or JPEG to [0,1] RGB. With `size`, the image is resized (area/linear) to it.
ImageRGB load_image(const std::filesystem::path& path, std::optional<GridSize> size = std::nullopt);
ImageRGB decode_image(std::string_view bytes, std::optional<GridSize> size = std::nullopt);

/// Single-channel mask, 0 = background, 255 = object. Non-binary inputs are
/// thresholded at 0.5 with a warning. Resizing uses nearest neighbour.
BinaryMask load_mask(const std::filesystem::path& path, std::optional<GridSize> size = std::nullopt);
BinaryMask decode_mask(std::string_view bytes, std::optional<GridSize> size = std::nullopt);

void save_image(const ImageRGB& image, const std::filesystem::path& path);
void save_mask(const BinaryMask& mask, const std::filesystem::path& path);
std::string encode_png(const ImageRGB& image);
std::string encode_png(const BinaryMask& mask);

/// Bilinear resize (used for previews and metric inputs).
ImageRGB resize_image(const ImageRGB& image, GridSize size);

/// Side-by-side concatenation; heights must match.
ImageRGB hconcat(const std::vector<ImageRGB>& images);

}  // namespace matfuse
