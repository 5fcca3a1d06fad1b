// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "matfuse/denoiser/denoiser.hpp"

#include <algorithm>
#include <cmath>

#include "matfuse/errors.hpp"

namespace matfuse {

std::string to_string(ConditioningMode mode) {
    switch (mode) {
        case ConditioningMode::Null:
            return "null";
        case ConditioningMode::Text:
            return "text";
        case ConditioningMode::TextImage:
            return "text+image";
    }
    return "unknown";
}

Conditioning Conditioning::null() { return Conditioning{}; }

Conditioning Conditioning::text(std::string prompt) {
    Conditioning c;
    c.mode = ConditioningMode::Text;
    c.prompt = std::move(prompt);
    return c;
}

Conditioning Conditioning::text_image(std::string prompt, MaterialEmbedding image, double lambda,
                                      std::vector<BinaryMask> mask_pyramid) {
    Conditioning c;
    c.mode = ConditioningMode::TextImage;
    c.prompt = std::move(prompt);
    c.image = std::move(image);
    c.lambda = lambda;
    c.mask_pyramid = std::move(mask_pyramid);
    return c;
}

// Null and Text modes ignore any image tokens, lambda or masks left on the struct.
void Conditioning::validate() const {
    if (mode != ConditioningMode::TextImage)
        return;
    if (image.tokens.rank() != 2 || image.tokens.empty())
        throw ValidationError("conditioning", "text+image mode requires material tokens");
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw ValidationError("lam", "must be >= 0");
    if (mask_pyramid.empty())
        throw ValidationError("conditioning", "text+image mode requires a mask pyramid");
}

nlohmann::json to_json(const BackendManifest& m) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : m.self_attention_layers)
        layers.push_back({{"name", l.name}, {"shape", l.shape}});
    nlohmann::json grids = nlohmann::json::array();
    for (const auto& g : m.cross_attention_grids)
        grids.push_back({g.height, g.width});
    return {{"name", m.name},
            {"image_shape", {m.image_height, m.image_width}},
            {"latent_shape", m.latent_shape()},
            {"self_attention_layers", layers},
            {"num_self_attention_layers", m.self_attention_layers.size()},
            {"feature_shape", m.feature_shape},
            {"cross_attention_grids", grids},
            {"embedding_tokens", m.embedding_tokens},
            {"embedding_dim", m.embedding_dim},
            {"details", m.details}};
}

BackendManifest manifest_from_json(const nlohmann::json& doc) {
    try {
        BackendManifest m;
        m.name = doc.at("name").get<std::string>();
        const auto image = doc.at("image_shape").get<std::vector<std::size_t>>();
        const auto latent = doc.at("latent_shape").get<std::vector<std::size_t>>();
        if (image.size() != 2 || latent.size() != 3)
            throw ValidationError("manifest", "image_shape must have 2 dims and latent_shape 3");
        m.image_height = image[0];
        m.image_width = image[1];
        m.latent_channels = latent[0];
        m.latent_height = latent[1];
        m.latent_width = latent[2];
        for (const auto& l : doc.at("self_attention_layers"))
            m.self_attention_layers.push_back({l.at("name").get<std::string>(), l.at("shape").get<Shape>()});
        m.feature_shape = doc.at("feature_shape").get<Shape>();
        for (const auto& g : doc.at("cross_attention_grids")) {
            const auto hw = g.get<std::vector<std::size_t>>();
            if (hw.size() != 2)
                throw ValidationError("manifest", "cross_attention_grids entries must be [h, w]");
            m.cross_attention_grids.push_back({hw[0], hw[1]});
        }
        m.embedding_tokens = doc.at("embedding_tokens").get<std::size_t>();
        m.embedding_dim = doc.at("embedding_dim").get<std::size_t>();
        if (doc.contains("details"))
            m.details = doc.at("details");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("manifest", std::string("malformed backend manifest: ") + e.what());
    }
}

NoisePrediction Denoiser::predict_noise(const Tensor& latent, int timestep, const Conditioning& cond,
                                        bool record_internals) {
    check_latent(latent);
    check_conditioning(cond);
    ++m_passes;
    NoisePrediction out = do_predict_noise(latent, timestep, cond, record_internals);
    if (!out.noise.same_shape(latent))
        throw BackendError(manifest().name, "backend returned noise of shape " + shape_to_string(out.noise.shape()));
    if (!record_internals)
        out.internals.reset();
    else if (!out.internals)
        throw BackendError(manifest().name, "backend did not record internals");
    return out;
}

InternalsPullback Denoiser::internals_pullback(const Tensor& latent, int timestep, const Conditioning& cond,
                                               const CotangentFn& cotangent) {
    check_latent(latent);
    check_conditioning(cond);
    ++m_passes;
    InternalsPullback out = do_internals_pullback(latent, timestep, cond, cotangent);
    if (!out.latent_grad.same_shape(latent))
        throw BackendError(manifest().name, "backend returned a gradient of shape " +
                                                shape_to_string(out.latent_grad.shape()));
    return out;
}

MaterialEmbedding Denoiser::embed_material(const ImageRGB& image) {
    if (image.empty())
        throw ValidationError("material", "empty material image");
    MaterialEmbedding e = do_embed_material(image);
    const auto& m = manifest();
    if (e.token_count() != m.embedding_tokens || e.dim() != m.embedding_dim)
        throw BackendError(m.name, "material embedding has shape " + shape_to_string(e.tokens.shape()));
    return e;
}

Tensor Denoiser::encode(const ImageRGB& image) {
    check_image(image);
    Tensor z = do_encode(image);
    check_latent(z);
    return z;
}

ImageRGB Denoiser::decode(const Tensor& latent) {
    check_latent(latent);
    ImageRGB image = do_decode(latent);
    for (double& v : image.pixels())
        v = std::clamp(std::isnan(v) ? 0.0 : v, 0.0, 1.0);
    return image;
}

void Denoiser::check_latent(const Tensor& latent) const {
    const Shape expected = manifest().latent_shape();
    if (latent.shape() != expected)
        throw ShapeError("latent shape " + shape_to_string(latent.shape()) + " does not match backend " +
                         shape_to_string(expected));
}

void Denoiser::check_conditioning(const Conditioning& cond) const {
    cond.validate();
    if (cond.mode != ConditioningMode::TextImage)
        return;
    const auto& m = manifest();
    if (cond.image.token_count() != m.embedding_tokens || cond.image.dim() != m.embedding_dim)
        throw ShapeError("material tokens " + shape_to_string(cond.image.tokens.shape()) + " do not match backend [" +
                         std::to_string(m.embedding_tokens) + "x" + std::to_string(m.embedding_dim) + "]");
    if (cond.mask_pyramid.size() != m.cross_attention_grids.size())
        throw ShapeError("mask pyramid has " + std::to_string(cond.mask_pyramid.size()) + " levels, backend expects " +
                         std::to_string(m.cross_attention_grids.size()));
    for (std::size_t i = 0; i < cond.mask_pyramid.size(); ++i) {
        const auto& mask = cond.mask_pyramid[i];
        const auto& grid = m.cross_attention_grids[i];
        if (mask.height() != grid.height || mask.width() != grid.width)
            throw ShapeError("mask pyramid level " + std::to_string(i) + " is " + std::to_string(mask.height()) + "x" +
                             std::to_string(mask.width()) + ", backend expects " + std::to_string(grid.height) + "x" +
                             std::to_string(grid.width));
    }
}

void Denoiser::check_image(const ImageRGB& image) const {
    image.validate();
    const auto& m = manifest();
    if (image.height() != m.image_height || image.width() != m.image_width)
        throw ShapeError("image " + std::to_string(image.height()) + "x" + std::to_string(image.width()) +
                         " does not match backend " + std::to_string(m.image_height) + "x" +
                         std::to_string(m.image_width));
}

}  // namespace matfuse
