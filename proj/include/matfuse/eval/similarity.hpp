// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "matfuse/core/image.hpp"

namespace matfuse::eval {

inline const std::vector<std::size_t> kDefaultCropSizes = {64, 128};

struct Crop {
    std::size_t y = 0;
    std::size_t x = 0;
    std::size_t size = 0;
    ImageRGB pixels;
};

/// Square crops on the stride grid (stride 0 means size / 2) whose footprint
/// lies entirely inside the mask. Sizes larger than the image are skipped.
/// Throws ValidationError("mask", "mask too small ...") when no crop fits at any size.
std::vector<Crop> extract_crops(const ImageRGB& image, const BinaryMask& mask,
                                const std::vector<std::size_t>& sizes = kDefaultCropSizes, std::size_t stride = 0);

/// Crops of an unmasked image (all-ones mask).
std::vector<Crop> extract_all_crops(const ImageRGB& image, const std::vector<std::size_t>& sizes = kDefaultCropSizes,
                                std::size_t stride = 0);

class ImageEmbedder {
public:
    virtual ~ImageEmbedder() = default;
    /// Recorded in every report.
    virtual std::string name() const = 0;
    virtual std::vector<double> embed(const ImageRGB& image) const = 0;
};

/// Offline fallback: joint 4x4x4 colour histogram plus an 8-bin
/// magnitude-weighted gradient orientation histogram, each L1-normalized.
/// Not a CLIP model; reports carry its name so scores are never mistaken for CLIP scores.
class TextureStatsEmbedder final : public ImageEmbedder {
public:
    std::string name() const override { return "texture-stats-v1"; }
    std::vector<double> embed(const ImageRGB& image) const override;
};

std::unique_ptr<ImageEmbedder> make_default_embedder();

/// Mean over all (a, b) pairs of cos(a, b), computed through the mean unit vectors.
/// Zero embeddings contribute cosine 0. Throws ValidationError on empty sets or mismatched dims.
double mean_pairwise_cosine(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b);

/// The same mean by an explicit double loop.
double mean_pairwise_cosine_naive(const std::vector<std::vector<double>>& a,
                                  const std::vector<std::vector<double>>& b);

struct SimilarityResult {
    double score = 0.0;
    std::size_t edited_crops = 0;
    std::size_t material_crops = 0;
};

/// Mask-interior crops of `edited` against full-image crops of `material`, both sizes pooled.
SimilarityResult crop_clip_similarity(const ImageRGB& edited, const BinaryMask& mask, const ImageRGB& material,
                                      const ImageEmbedder& embedder,
                                      const std::vector<std::size_t>& sizes = kDefaultCropSizes,
                                      std::size_t stride = 0);

}  // namespace matfuse::eval
