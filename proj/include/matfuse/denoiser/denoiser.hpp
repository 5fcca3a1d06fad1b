// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "matfuse/core/image.hpp"
#include "matfuse/core/mask.hpp"
#include "matfuse/tensor.hpp"

namespace matfuse {

/// Image-encoder tokens for a material exemplar: tokens x dim.
struct MaterialEmbedding {
    Tensor tokens;

    std::size_t token_count() const { return tokens.rank() == 2 ? tokens.dim(0) : 0; }
    std::size_t dim() const { return tokens.rank() == 2 ? tokens.dim(1) : 0; }

    friend bool operator==(const MaterialEmbedding&, const MaterialEmbedding&) = default;
};

enum class ConditioningMode { Null, Text, TextImage };

std::string to_string(ConditioningMode mode);

/// What the noise predictor is conditioned on. Null = empty prompt with no image tokens.
struct Conditioning {
    ConditioningMode mode = ConditioningMode::Null;
    std::string prompt;
    MaterialEmbedding image;              // TextImage only
    double lambda = 0.0;                  // TextImage only
    std::vector<BinaryMask> mask_pyramid;  // TextImage only, one mask per cross-attention level

    static Conditioning null();
    static Conditioning text(std::string prompt);
    static Conditioning text_image(std::string prompt, MaterialEmbedding image, double lambda,
                                   std::vector<BinaryMask> mask_pyramid);

    void validate() const;
};

/// Internal representations recorded during one noise prediction: the declared
/// self-attention maps and the last up-block features.
struct DenoiserInternals {
    std::vector<Tensor> self_attn_maps;
    Tensor features;

    friend bool operator==(const DenoiserInternals&, const DenoiserInternals&) = default;
};

struct NoisePrediction {
    Tensor noise;
    std::optional<DenoiserInternals> internals;
};

struct AttentionLayerInfo {
    std::string name;
    Shape shape;

    friend bool operator==(const AttentionLayerInfo&, const AttentionLayerInfo&) = default;
};

/// Static description of a backend; serialized next to every result.
struct BackendManifest {
    std::string name;
    std::size_t image_height = kDefaultImageSize;
    std::size_t image_width = kDefaultImageSize;
    std::size_t latent_channels = 4;
    std::size_t latent_height = kDefaultImageSize / kLatentDownscale;
    std::size_t latent_width = kDefaultImageSize / kLatentDownscale;
    std::vector<AttentionLayerInfo> self_attention_layers;
    Shape feature_shape;
    /// Query grids of the image cross-attention layers; the object mask is pooled to each.
    std::vector<GridSize> cross_attention_grids;
    std::size_t embedding_tokens = 0;
    std::size_t embedding_dim = 0;
    nlohmann::json details = nlohmann::json::object();

    Shape latent_shape() const { return {latent_channels, latent_height, latent_width}; }
};

nlohmann::json to_json(const BackendManifest& manifest);
BackendManifest manifest_from_json(const nlohmann::json& doc);

/// Cotangent of a scalar energy with respect to the recorded internals.
using CotangentFn = std::function<DenoiserInternals(const DenoiserInternals& current)>;

struct InternalsPullback {
    DenoiserInternals internals;
    Tensor latent_grad;
};

/// Noise-prediction backend. Public entry points validate shapes and count
/// forward passes; implementations override the do_* hooks.
class Denoiser {
public:
    virtual ~Denoiser() = default;

    virtual const BackendManifest& manifest() const = 0;

    /// eps_theta(z, timestep, cond). `timestep` is the native diffusion timestep.
    NoisePrediction predict_noise(const Tensor& latent, int timestep, const Conditioning& cond,
                                  bool record_internals);

    /// One forward pass that records internals, followed by the pullback of the
    /// cotangent returned by `cotangent` onto the latent. Counts as one pass.
    InternalsPullback internals_pullback(const Tensor& latent, int timestep, const Conditioning& cond,
                                         const CotangentFn& cotangent);

    MaterialEmbedding embed_material(const ImageRGB& image);
    Tensor encode(const ImageRGB& image);
    /// Output is clamped into [0, 1].
    ImageRGB decode(const Tensor& latent);

    std::size_t pass_count() const { return m_passes; }
    void reset_pass_count() { m_passes = 0; }

protected:
    virtual NoisePrediction do_predict_noise(const Tensor& latent, int timestep, const Conditioning& cond,
                                             bool record_internals) = 0;
    virtual InternalsPullback do_internals_pullback(const Tensor& latent, int timestep, const Conditioning& cond,
                                                    const CotangentFn& cotangent) = 0;
    virtual MaterialEmbedding do_embed_material(const ImageRGB& image) = 0;
    virtual Tensor do_encode(const ImageRGB& image) = 0;
    virtual ImageRGB do_decode(const Tensor& latent) = 0;

    void check_latent(const Tensor& latent) const;
    void check_conditioning(const Conditioning& cond) const;
    void check_image(const ImageRGB& image) const;

private:
    std::size_t m_passes = 0;
};

}  // namespace matfuse
