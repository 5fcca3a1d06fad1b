// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "matfuse/eval/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "matfuse/core/mask.hpp"
#include "matfuse/errors.hpp"

namespace matfuse::eval {

namespace {

ImageRGB slice(const ImageRGB& image, std::size_t y0, std::size_t x0, std::size_t size) {
    ImageRGB out(size, size);
    for (std::size_t y = 0; y < size; ++y) {
        const double* src = &image.pixels()[((y0 + y) * image.width() + x0) * 3];
        std::copy(src, src + size * 3, &out.pixels()[y * size * 3]);
    }
    return out;
}

double norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v)
        s += x * x;
    return std::sqrt(s);
}

std::size_t common_dim(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
    if (a.empty() || b.empty())
        throw ValidationError("crops", "empty crop set");
    const std::size_t d = a.front().size();
    for (const auto* set : {&a, &b})
        for (const auto& v : *set)
            if (v.size() != d)
                throw ValidationError("embedding", fmt::format("dimension {} differs from {}", v.size(), d));
    return d;
}

}  // namespace

std::vector<Crop> extract_crops(const ImageRGB& image, const BinaryMask& mask, const std::vector<std::size_t>& sizes,
                                std::size_t stride) {
    if (mask.height() != image.height() || mask.width() != image.width())
        throw ShapeError(fmt::format("mask is {}x{}, image is {}x{}", mask.height(), mask.width(), image.height(),
                                     image.width()));
    const std::size_t h = image.height(), w = image.width();
    // Summed-area table of the mask.
    std::vector<std::size_t> sat((h + 1) * (w + 1), 0);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            sat[(y + 1) * (w + 1) + x + 1] =
                mask.at(y, x) + sat[y * (w + 1) + x + 1] + sat[(y + 1) * (w + 1) + x] - sat[y * (w + 1) + x];

    std::vector<Crop> crops;
    for (const std::size_t size : sizes) {
        if (size == 0)
            throw ValidationError("sizes", "crop size must be positive");
        if (size > h || size > w)
            continue;
        const std::size_t step = stride > 0 ? stride : std::max<std::size_t>(size / 2, 1);
        for (std::size_t y = 0; y + size <= h; y += step)
            for (std::size_t x = 0; x + size <= w; x += step) {
                const std::size_t inside = sat[(y + size) * (w + 1) + x + size] - sat[y * (w + 1) + x + size] -
                                           sat[(y + size) * (w + 1) + x] + sat[y * (w + 1) + x];
                if (inside == size * size)
                    crops.push_back({y, x, size, slice(image, y, x, size)});
            }
    }
    if (crops.empty()) {
        const std::size_t smallest = sizes.empty() ? 0 : *std::min_element(sizes.begin(), sizes.end());
        throw ValidationError("mask", fmt::format("mask too small: no {}x{} crop fits inside it", smallest, smallest));
    }
    return crops;
}

std::vector<Crop> extract_all_crops(const ImageRGB& image, const std::vector<std::size_t>& sizes, std::size_t stride) {
    return extract_crops(image, BinaryMask(image.height(), image.width(), 1), sizes, stride);
}

std::vector<double> TextureStatsEmbedder::embed(const ImageRGB& image) const {
    image.validate_range();
    constexpr std::size_t kBins = 4, kOrient = 8;
    std::vector<double> out(kBins * kBins * kBins + kOrient, 0.0);
    const auto bin = [](double v) { return std::min<std::size_t>(static_cast<std::size_t>(v * kBins), kBins - 1); };
    const std::size_t h = image.height(), w = image.width();
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            out[(bin(image.at(y, x, 0)) * kBins + bin(image.at(y, x, 1))) * kBins + bin(image.at(y, x, 2))] += 1.0;
    for (std::size_t i = 0; i < kBins * kBins * kBins; ++i)
        out[i] /= static_cast<double>(h * w);

    const auto lum = [&](std::size_t y, std::size_t x) {
        return 0.299 * image.at(y, x, 0) + 0.587 * image.at(y, x, 1) + 0.114 * image.at(y, x, 2);
    };
    double total = 0.0;
    for (std::size_t y = 1; y + 1 < h; ++y)
        for (std::size_t x = 1; x + 1 < w; ++x) {
            const double gx = lum(y, x + 1) - lum(y, x - 1);
            const double gy = lum(y + 1, x) - lum(y - 1, x);
            const double mag = std::hypot(gx, gy);
            if (mag == 0.0)
                continue;
            // Orientation modulo pi.
            double theta = std::atan2(gy, gx);
            if (theta < 0.0)
                theta += std::numbers::pi;
            const auto k = std::min<std::size_t>(static_cast<std::size_t>(theta / std::numbers::pi * kOrient), kOrient - 1);
            out[kBins * kBins * kBins + k] += mag;
            total += mag;
        }
    if (total > 0.0)
        for (std::size_t k = 0; k < kOrient; ++k)
            out[kBins * kBins * kBins + k] /= total;
    return out;
}

std::unique_ptr<ImageEmbedder> make_default_embedder() { return std::make_unique<TextureStatsEmbedder>(); }

double mean_pairwise_cosine(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
    const std::size_t d = common_dim(a, b);
    const auto mean_unit = [d](const std::vector<std::vector<double>>& set) {
        std::vector<double> m(d, 0.0);
        for (const auto& v : set) {
            const double n = norm(v);
            if (n == 0.0)
                continue;
            for (std::size_t i = 0; i < d; ++i)
                m[i] += v[i] / n;
        }
        for (double& x : m)
            x /= static_cast<double>(set.size());
        return m;
    };
    const auto ma = mean_unit(a), mb = mean_unit(b);
    double dot = 0.0;
    for (std::size_t i = 0; i < d; ++i)
        dot += ma[i] * mb[i];
    return dot;
}

double mean_pairwise_cosine_naive(const std::vector<std::vector<double>>& a,
                                  const std::vector<std::vector<double>>& b) {
    const std::size_t d = common_dim(a, b);
    double sum = 0.0;
    for (const auto& u : a)
        for (const auto& v : b) {
            const double nu = norm(u), nv = norm(v);
            if (nu == 0.0 || nv == 0.0)
                continue;
            double dot = 0.0;
            for (std::size_t i = 0; i < d; ++i)
                dot += u[i] * v[i];
            sum += dot / (nu * nv);
        }
    return sum / static_cast<double>(a.size() * b.size());
}

SimilarityResult crop_clip_similarity(const ImageRGB& edited, const BinaryMask& mask, const ImageRGB& material,
                                      const ImageEmbedder& embedder, const std::vector<std::size_t>& sizes,
                                      std::size_t stride) {
    const auto embed_all = [&](const std::vector<Crop>& crops) {
        std::vector<std::vector<double>> out;
        out.reserve(crops.size());
        for (const Crop& c : crops)
            out.push_back(embedder.embed(c.pixels));
        return out;
    };
    const auto ea = embed_all(extract_crops(edited, mask, sizes, stride));
    const auto eb = embed_all(extract_all_crops(material, sizes, stride));
    return {mean_pairwise_cosine(ea, eb), ea.size(), eb.size()};
}

}  // namespace matfuse::eval
