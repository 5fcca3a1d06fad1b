// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <optional>

#include "matfuse/conditioning/attention.hpp"
#include "matfuse/denoiser/denoiser.hpp"

namespace matfuse {

struct ToyOptions {
    std::size_t image_height = kDefaultImageSize;
    std::size_t image_width = kDefaultImageSize;
    /// When set, every noise prediction is this constant (internals stay z-dependent).
    std::optional<double> constant_noise;
};

/// Weight-free stand-in for a latent diffusion UNet with an image-prompt adapter.
///
/// The latent z (4 x h x w) is average-pooled into two token grids (h/2 x w/2 and
/// h/4 x w/4). Each level runs a softmax self-attention whose probability matrix is
/// a recorded self-attention map, then a decoupled cross-attention over prompt
/// tokens and material tokens (lambda-weighted, mask-gated per query). The recorded
/// feature map is a fixed 1x1 linear map of z. The noise is
///   eps = s(t) * (W_out z + sum_k g_k * upsample(level_k)),
/// smooth in z with an exact hand-written pullback.
///
/// The VAE is a fixed linear pair: encode maps each 8x8 block mean colour m to
/// A (2m - 1) with A a 4x3 full-column-rank matrix; decode applies the
/// pseudo-inverse and replicates over the block. decode(encode(x)) == x for
/// block-constant images.
class ToyDenoiser final : public Denoiser {
public:
    using Matrix = conditioning::Matrix;

    ToyDenoiser(std::uint64_t seed, ToyOptions options);

    const BackendManifest& manifest() const override { return m_manifest; }

    /// Pullback of <d_noise, eps(z)> onto z (the full Jacobian-transpose product).
    Tensor noise_pullback(const Tensor& latent, int timestep, const Conditioning& cond, const Tensor& d_noise);

    /// Prompt tokens, tokens x dim. Deterministic in the prompt text.
    Matrix prompt_tokens(const std::string& prompt) const;

    /// Material tokens are projection * mean_colour, reshaped row-major to tokens x dim.
    const Matrix& material_projection() const { return m_material_projection; }
    const Matrix& encoder_matrix() const { return m_encoder; }

    std::uint64_t seed() const { return m_seed; }

protected:
    NoisePrediction do_predict_noise(const Tensor& latent, int timestep, const Conditioning& cond,
                                     bool record_internals) override;
    InternalsPullback do_internals_pullback(const Tensor& latent, int timestep, const Conditioning& cond,
                                            const CotangentFn& cotangent) override;
    MaterialEmbedding do_embed_material(const ImageRGB& image) override;
    Tensor do_encode(const ImageRGB& image) override;
    ImageRGB do_decode(const Tensor& latent) override;

private:
    struct LevelWeights {
        std::size_t pool = 1;
        Matrix self_q, self_k, self_v;
        Matrix cross_q;
        Matrix text_k, text_v;
        Matrix image_k, image_v;
        double gain = 0.5;
    };
    struct LevelCache;
    struct ForwardCache;

    ForwardCache forward(const Tensor& latent, int timestep, const Conditioning& cond) const;
    Tensor backward(const ForwardCache& cache, const Tensor* d_noise, const DenoiserInternals* d_internals) const;
    double time_scale(int timestep) const;

    std::uint64_t m_seed;
    ToyOptions m_options;
    BackendManifest m_manifest;
    std::vector<LevelWeights> m_levels;
    Matrix m_out;       // C x C
    Matrix m_features;  // F x C
    Matrix m_material_projection;
    Matrix m_encoder;   // 4 x 3
    Matrix m_decoder;   // 3 x 4 pseudo-inverse
};

std::unique_ptr<ToyDenoiser> make_toy_backend(std::uint64_t seed, ToyOptions options = {});

/// Toy backend whose noise prediction is identically `value`.
std::unique_ptr<ToyDenoiser> make_constant_backend(double value, ToyOptions options = {});

}  // namespace matfuse
