// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "matfuse/core/mask.hpp"

#include "matfuse/errors.hpp"

namespace matfuse {

BinaryMask downsample_mask(const BinaryMask& mask, GridSize target, MaskResolution tag) {
    if (target.height == 0 || target.width == 0 || mask.height() % target.height || mask.width() % target.width)
        throw ValidationError("mask", "target " + std::to_string(target.height) + "x" + std::to_string(target.width) +
                                          " does not evenly divide " + std::to_string(mask.height()) + "x" +
                                          std::to_string(mask.width()));
    const std::size_t fy = mask.height() / target.height;
    const std::size_t fx = mask.width() / target.width;
    BinaryMask out(target.height, target.width, 0, tag);
    for (std::size_t y = 0; y < mask.height(); ++y) {
        for (std::size_t x = 0; x < mask.width(); ++x) {
            if (mask.at(y, x))
                out.at(y / fy, x / fx) = 1;
        }
    }
    return out;
}

BinaryMask downsample_mask(const BinaryMask& mask, GridSize target) {
    MaskResolution tag = mask.resolution();
    if (target.height != mask.height() || target.width != mask.width())
        tag = {MaskSpace::Latent, 0};
    return downsample_mask(mask, target, tag);
}

std::vector<BinaryMask> mask_pyramid(const BinaryMask& mask, const std::vector<GridSize>& levels) {
    std::vector<BinaryMask> out;
    out.reserve(levels.size());
    for (std::size_t i = 0; i < levels.size(); ++i)
        out.push_back(downsample_mask(mask, levels[i], {MaskSpace::Attention, static_cast<int>(i)}));
    return out;
}

BinaryMask upsample_mask(const BinaryMask& mask, std::size_t factor) {
    BinaryMask out(mask.height() * factor, mask.width() * factor, 0, {MaskSpace::Pixel, 0});
    for (std::size_t y = 0; y < out.height(); ++y)
        for (std::size_t x = 0; x < out.width(); ++x)
            out.at(y, x) = mask.at(y / factor, x / factor);
    return out;
}

void require_nonempty(const BinaryMask& mask, const char* what) {
    if (!mask.any())
        throw ValidationError(what, "mask empty");
}

}  // namespace matfuse
