// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "matfuse/denoiser/toy_backend.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "matfuse/errors.hpp"

namespace matfuse {

namespace {

constexpr std::size_t kChannels = 4;
constexpr std::size_t kKeyDim = 8;
constexpr std::size_t kTokenDim = 8;
constexpr std::size_t kPromptTokens = 4;
constexpr std::size_t kMaterialTokens = 4;
constexpr std::size_t kFeatureChannels = 4;
constexpr std::size_t kLevelPools[] = {2, 4};

using Matrix = conditioning::Matrix;

Matrix gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale) {
    std::normal_distribution<double> normal(0.0, scale);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i)
        m.data()[i] = normal(rng);
    return m;
}

std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// z (C x h x w) -> tokens (N x C), mean over pool x pool blocks
Matrix pool_tokens(const Tensor& z, std::size_t pool) {
    const std::size_t h = z.dim(1), w = z.dim(2);
    const std::size_t gh = h / pool, gw = w / pool;
    Matrix x = Matrix::Zero(static_cast<Eigen::Index>(gh * gw), static_cast<Eigen::Index>(z.dim(0)));
    const double inv = 1.0 / static_cast<double>(pool * pool);
    for (std::size_t c = 0; c < z.dim(0); ++c)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx)
                x((y / pool) * gw + xx / pool, c) += z.at(c, y, xx) * inv;
    return x;
}

void pool_tokens_adjoint(const Matrix& dx, std::size_t pool, Tensor& dz) {
    const std::size_t h = dz.dim(1), w = dz.dim(2);
    const std::size_t gw = w / pool;
    const double inv = 1.0 / static_cast<double>(pool * pool);
    for (std::size_t c = 0; c < dz.dim(0); ++c)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx)
                dz.at(c, y, xx) += dx((y / pool) * gw + xx / pool, c) * inv;
}

// tokens (N x C) -> C x h x w, nearest replication, accumulated with `gain`
void upsample_tokens(const Matrix& tokens, std::size_t pool, double gain, Tensor& out) {
    const std::size_t h = out.dim(1), w = out.dim(2);
    const std::size_t gw = w / pool;
    for (std::size_t c = 0; c < out.dim(0); ++c)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx)
                out.at(c, y, xx) += gain * tokens((y / pool) * gw + xx / pool, c);
}

Matrix upsample_tokens_adjoint(const Tensor& d, std::size_t pool, double gain, Eigen::Index tokens) {
    const std::size_t h = d.dim(1), w = d.dim(2);
    const std::size_t gw = w / pool;
    Matrix out = Matrix::Zero(tokens, static_cast<Eigen::Index>(d.dim(0)));
    for (std::size_t c = 0; c < d.dim(0); ++c)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx)
                out((y / pool) * gw + xx / pool, c) += gain * d.at(c, y, xx);
    return out;
}

// per-pixel channel mixing: out[:, y, x] += m * z[:, y, x]
void mix_channels(const Matrix& m, const Tensor& z, double scale, Tensor& out) {
    const std::size_t hw = z.dim(1) * z.dim(2);
    for (std::size_t o = 0; o < out.dim(0); ++o)
        for (std::size_t i = 0; i < z.dim(0); ++i) {
            const double coeff = scale * m(o, i);
            if (coeff == 0.0)
                continue;
            const double* src = z.data() + i * hw;
            double* dst = out.data() + o * hw;
            for (std::size_t p = 0; p < hw; ++p)
                dst[p] += coeff * src[p];
        }
}

Tensor to_tensor(const Matrix& m) {
    Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
    std::copy(m.data(), m.data() + m.size(), t.data());
    return t;
}

Matrix to_matrix(const Tensor& t) {
    Matrix m(static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1)));
    std::copy(t.data(), t.data() + t.size(), m.data());
    return m;
}

}  // namespace

struct ToyDenoiser::LevelCache {
    Matrix x;
    Matrix qs, ks, vs;
    conditioning::AttentionResult self;
    Matrix h;
    conditioning::AttentionInputs cross;
    conditioning::DecoupledAttentionResult cross_out;
};

struct ToyDenoiser::ForwardCache {
    Tensor latent;
    double scale = 1.0;
    std::vector<LevelCache> levels;
    Tensor noise;
    DenoiserInternals internals;
};

ToyDenoiser::ToyDenoiser(std::uint64_t seed, ToyOptions options) : m_seed(seed), m_options(options) {
    const std::size_t unit = kLatentDownscale * kLevelPools[1];
    if (options.image_height == 0 || options.image_width == 0 || options.image_height % unit ||
        options.image_width % unit)
        throw ValidationError("image", "toy backend needs image dims divisible by " + std::to_string(unit));

    std::mt19937_64 rng(seed);
    const auto c = static_cast<Eigen::Index>(kChannels);
    const auto d = static_cast<Eigen::Index>(kKeyDim);
    const auto e = static_cast<Eigen::Index>(kTokenDim);

    m_manifest.name = options.constant_noise ? "toy-constant" : "toy";
    m_manifest.image_height = options.image_height;
    m_manifest.image_width = options.image_width;
    m_manifest.latent_channels = kChannels;
    m_manifest.latent_height = options.image_height / kLatentDownscale;
    m_manifest.latent_width = options.image_width / kLatentDownscale;
    m_manifest.embedding_tokens = kMaterialTokens;
    m_manifest.embedding_dim = kTokenDim;
    m_manifest.feature_shape = {kFeatureChannels, m_manifest.latent_height, m_manifest.latent_width};

    static const char* kLayerNames[] = {"toy.level0.self_attn", "toy.level1.self_attn"};
    for (std::size_t k = 0; k < std::size(kLevelPools); ++k) {
        LevelWeights lw;
        lw.pool = kLevelPools[k];
        lw.self_q = gaussian(rng, c, d, 0.5);
        lw.self_k = gaussian(rng, c, d, 0.5);
        lw.self_v = gaussian(rng, c, c, 0.3);
        lw.cross_q = gaussian(rng, c, d, 0.5);
        lw.text_k = gaussian(rng, e, d, 0.5);
        lw.text_v = gaussian(rng, e, c, 0.3);
        lw.image_k = gaussian(rng, e, d, 0.5);
        lw.image_v = gaussian(rng, e, c, 0.3);
        lw.gain = 0.5;
        m_levels.push_back(std::move(lw));

        const std::size_t gh = m_manifest.latent_height / kLevelPools[k];
        const std::size_t gw = m_manifest.latent_width / kLevelPools[k];
        m_manifest.self_attention_layers.push_back({kLayerNames[k], {gh * gw, gh * gw}});
        m_manifest.cross_attention_grids.push_back({gh, gw});
    }
    m_out = 0.5 * Matrix::Identity(c, c) + gaussian(rng, c, c, 0.1);
    m_features = gaussian(rng, static_cast<Eigen::Index>(kFeatureChannels), c, 0.5);
    m_material_projection = gaussian(rng, static_cast<Eigen::Index>(kMaterialTokens * kTokenDim), 3, 1.0);

    m_encoder.resize(4, 3);
    m_encoder << 1.0, 0.0, 0.0,  //
        0.0, 1.0, 0.0,           //
        0.0, 0.0, 1.0,           //
        0.3, 0.59, 0.11;
    m_decoder = (m_encoder.transpose() * m_encoder).inverse() * m_encoder.transpose();

    m_manifest.details = {{"seed", seed},
                          {"vae", "block-mean linear, factor 8"},
                          {"key_dim", kKeyDim},
                          {"prompt_tokens", kPromptTokens}};
    if (options.constant_noise)
        m_manifest.details["constant_noise"] = *options.constant_noise;
}

double ToyDenoiser::time_scale(int timestep) const {
    return 0.75 + 0.25 * std::cos(std::numbers::pi * static_cast<double>(timestep) / 1000.0);
}

ToyDenoiser::Matrix ToyDenoiser::prompt_tokens(const std::string& prompt) const {
    std::mt19937_64 rng(fnv1a(prompt) ^ (m_seed * 0x9e3779b97f4a7c15ULL));
    return gaussian(rng, static_cast<Eigen::Index>(kPromptTokens), static_cast<Eigen::Index>(kTokenDim), 1.0);
}

ToyDenoiser::ForwardCache ToyDenoiser::forward(const Tensor& latent, int timestep, const Conditioning& cond) const {
    ForwardCache cache;
    cache.latent = latent;
    cache.scale = time_scale(timestep);

    const bool with_image = cond.mode == ConditioningMode::TextImage;
    const Matrix text = prompt_tokens(cond.mode == ConditioningMode::Null ? std::string() : cond.prompt);
    const Matrix image = with_image ? to_matrix(cond.image.tokens)
                                    : Matrix::Zero(static_cast<Eigen::Index>(kMaterialTokens),
                                                   static_cast<Eigen::Index>(kTokenDim));

    Tensor mixed(latent.shape());
    for (std::size_t k = 0; k < m_levels.size(); ++k) {
        const LevelWeights& lw = m_levels[k];
        LevelCache lc;
        lc.x = pool_tokens(latent, lw.pool);
        lc.qs = lc.x * lw.self_q;
        lc.ks = lc.x * lw.self_k;
        lc.vs = lc.x * lw.self_v;
        lc.self = conditioning::attention(lc.qs, lc.ks, lc.vs);
        lc.h = lc.x + lc.self.output;

        lc.cross.queries = lc.h * lw.cross_q;
        lc.cross.text_keys = text * lw.text_k;
        lc.cross.text_values = text * lw.text_v;
        lc.cross.image_keys = image * lw.image_k;
        lc.cross.image_values = image * lw.image_v;
        lc.cross.lambda = with_image ? cond.lambda : 0.0;
        if (with_image)
            lc.cross.level_mask = cond.mask_pyramid[k];
        lc.cross_out = conditioning::decoupled_attention_forward(lc.cross);

        upsample_tokens(lc.h + lc.cross_out.output, lw.pool, lw.gain, mixed);
        cache.internals.self_attn_maps.push_back(to_tensor(lc.self.probs));
        cache.levels.push_back(std::move(lc));
    }

    cache.internals.features = Tensor(m_manifest.feature_shape);
    mix_channels(m_features, latent, 1.0, cache.internals.features);

    if (m_options.constant_noise) {
        cache.noise = Tensor(latent.shape(), *m_options.constant_noise);
    } else {
        mix_channels(m_out, latent, 1.0, mixed);
        cache.noise = std::move(mixed);
        cache.noise *= cache.scale;
    }
    return cache;
}

Tensor ToyDenoiser::backward(const ForwardCache& cache, const Tensor* d_noise,
                             const DenoiserInternals* d_internals) const {
    Tensor dz(cache.latent.shape());
    if (d_internals && !d_internals->features.empty())
        mix_channels(m_features.transpose(), d_internals->features, 1.0, dz);

    const bool through_noise = d_noise && !m_options.constant_noise;
    if (through_noise)
        mix_channels(m_out.transpose(), *d_noise, cache.scale, dz);

    for (std::size_t k = 0; k < m_levels.size(); ++k) {
        const LevelWeights& lw = m_levels[k];
        const LevelCache& lc = cache.levels[k];
        const Eigen::Index n = lc.x.rows();

        Matrix d_out = through_noise ? upsample_tokens_adjoint(*d_noise, lw.pool, lw.gain * cache.scale, n)
                                     : Matrix::Zero(n, lc.x.cols());
        Matrix d_probs;
        const bool has_map_grad = d_internals && k < d_internals->self_attn_maps.size() &&
                                  !d_internals->self_attn_maps[k].empty();
        if (has_map_grad)
            d_probs = to_matrix(d_internals->self_attn_maps[k]);
        if (!through_noise && !has_map_grad)
            continue;

        Matrix dh = d_out;
        if (through_noise) {
            const Matrix dq = conditioning::decoupled_attention_backward_queries(lc.cross, lc.cross_out, d_out);
            dh += dq * lw.cross_q.transpose();
        }
        Matrix dx = dh;
        const auto g = conditioning::attention_backward(lc.qs, lc.ks, lc.vs, lc.self, dh,
                                                        has_map_grad ? &d_probs : nullptr);
        dx += g.d_queries * lw.self_q.transpose();
        dx += g.d_keys * lw.self_k.transpose();
        dx += g.d_values * lw.self_v.transpose();
        pool_tokens_adjoint(dx, lw.pool, dz);
    }
    return dz;
}

NoisePrediction ToyDenoiser::do_predict_noise(const Tensor& latent, int timestep, const Conditioning& cond,
                                              bool record_internals) {
    ForwardCache cache = forward(latent, timestep, cond);
    NoisePrediction out;
    out.noise = std::move(cache.noise);
    if (record_internals)
        out.internals = std::move(cache.internals);
    return out;
}

InternalsPullback ToyDenoiser::do_internals_pullback(const Tensor& latent, int timestep, const Conditioning& cond,
                                                     const CotangentFn& cotangent) {
    ForwardCache cache = forward(latent, timestep, cond);
    const DenoiserInternals d = cotangent(cache.internals);
    if (d.self_attn_maps.size() != cache.internals.self_attn_maps.size())
        throw ShapeError("cotangent has " + std::to_string(d.self_attn_maps.size()) + " attention maps, expected " +
                         std::to_string(cache.internals.self_attn_maps.size()));
    for (std::size_t i = 0; i < d.self_attn_maps.size(); ++i)
        require_same_shape(d.self_attn_maps[i], cache.internals.self_attn_maps[i], "attention cotangent");
    require_same_shape(d.features, cache.internals.features, "feature cotangent");

    InternalsPullback out;
    out.latent_grad = backward(cache, nullptr, &d);
    out.internals = std::move(cache.internals);
    return out;
}

Tensor ToyDenoiser::noise_pullback(const Tensor& latent, int timestep, const Conditioning& cond,
                                   const Tensor& d_noise) {
    check_latent(latent);
    check_conditioning(cond);
    require_same_shape(latent, d_noise, "noise cotangent");
    const ForwardCache cache = forward(latent, timestep, cond);
    return backward(cache, &d_noise, nullptr);
}

MaterialEmbedding ToyDenoiser::do_embed_material(const ImageRGB& image) {
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (std::size_t y = 0; y < image.height(); ++y)
        for (std::size_t x = 0; x < image.width(); ++x)
            for (int c = 0; c < 3; ++c)
                mean[c] += image.at(y, x, c);
    mean /= static_cast<double>(image.height() * image.width());
    const Eigen::VectorXd flat = m_material_projection * mean;
    Tensor tokens({kMaterialTokens, kTokenDim});
    std::copy(flat.data(), flat.data() + flat.size(), tokens.data());
    return {std::move(tokens)};
}

Tensor ToyDenoiser::do_encode(const ImageRGB& image) {
    const std::size_t f = kLatentDownscale;
    const std::size_t h = image.height() / f, w = image.width() / f;
    Tensor z({kChannels, h, w});
    const double inv = 1.0 / static_cast<double>(f * f);
    for (std::size_t by = 0; by < h; ++by)
        for (std::size_t bx = 0; bx < w; ++bx) {
            Eigen::Vector3d mean = Eigen::Vector3d::Zero();
            for (std::size_t y = by * f; y < (by + 1) * f; ++y)
                for (std::size_t x = bx * f; x < (bx + 1) * f; ++x)
                    for (int c = 0; c < 3; ++c)
                        mean[c] += image.at(y, x, c);
            mean *= inv;
            const Eigen::Vector4d code = m_encoder * (2.0 * mean.array() - 1.0).matrix();
            for (std::size_t c = 0; c < kChannels; ++c)
                z.at(c, by, bx) = code[static_cast<Eigen::Index>(c)];
        }
    return z;
}

ImageRGB ToyDenoiser::do_decode(const Tensor& latent) {
    const std::size_t f = kLatentDownscale;
    const std::size_t h = latent.dim(1), w = latent.dim(2);
    ImageRGB image(h * f, w * f);
    for (std::size_t by = 0; by < h; ++by)
        for (std::size_t bx = 0; bx < w; ++bx) {
            Eigen::Vector4d code;
            for (std::size_t c = 0; c < kChannels; ++c)
                code[static_cast<Eigen::Index>(c)] = latent.at(c, by, bx);
            const Eigen::Vector3d rgb = ((m_decoder * code).array() + 1.0) * 0.5;
            for (std::size_t y = by * f; y < (by + 1) * f; ++y)
                for (std::size_t x = bx * f; x < (bx + 1) * f; ++x)
                    for (int c = 0; c < 3; ++c)
                        image.at(y, x, c) = rgb[c];
        }
    return image;
}

std::unique_ptr<ToyDenoiser> make_toy_backend(std::uint64_t seed, ToyOptions options) {
    return std::make_unique<ToyDenoiser>(seed, options);
}

std::unique_ptr<ToyDenoiser> make_constant_backend(double value, ToyOptions options) {
    options.constant_noise = value;
    return std::make_unique<ToyDenoiser>(0, options);
}

}  // namespace matfuse
