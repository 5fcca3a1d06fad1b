// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "matfuse/core/image.hpp"

namespace matfuse {

struct GridSize {
    std::size_t height = 0;
    std::size_t width = 0;

    friend bool operator==(const GridSize&, const GridSize&) = default;
};

/// Max-pool resample: a target cell is 1 iff any source cell it covers is 1.
/// Target dims must divide the source dims.
BinaryMask downsample_mask(const BinaryMask& mask, GridSize target, MaskResolution tag);
BinaryMask downsample_mask(const BinaryMask& mask, GridSize target);

/// One max-pooled mask per level; level i is tagged as attention level i.
std::vector<BinaryMask> mask_pyramid(const BinaryMask& mask, const std::vector<GridSize>& levels);

/// Nearest-neighbour upsample by an integer factor (used to map latent masks back to pixels).
BinaryMask upsample_mask(const BinaryMask& mask, std::size_t factor);

/// Rejects empty masks; `what` names the mask in the error.
void require_nonempty(const BinaryMask& mask, const char* what = "mask");

}  // namespace matfuse
