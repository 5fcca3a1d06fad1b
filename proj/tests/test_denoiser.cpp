// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "matfuse/core/mask.hpp"
#include "matfuse/denoiser/toy_backend.hpp"
#include "matfuse/errors.hpp"
#include "test_util.hpp"

using namespace matfuse;
using fixtures::random_tensor;

namespace {

constexpr std::size_t kSize = 64;  // 8x8 latent, token grids 4x4 and 2x2

ToyOptions small() { return {kSize, kSize, std::nullopt}; }

Conditioning image_cond(ToyDenoiser& be, double lambda, const BinaryMask& pixel_mask) {
    const MaterialEmbedding emb = be.embed_material(fixtures::block_image(16, 16, 3));
    return Conditioning::text_image("a marble statue", emb, lambda,
                                    mask_pyramid(pixel_mask, be.manifest().cross_attention_grids));
}

}  // namespace

TEST(ToyBackend, ManifestDeclaresShapes) {
    auto be = make_toy_backend(0);
    const BackendManifest& m = be->manifest();
    EXPECT_EQ(m.name, "toy");
    EXPECT_EQ(m.latent_shape(), (Shape{4, 64, 64}));
    ASSERT_EQ(m.self_attention_layers.size(), 2u);
    EXPECT_EQ(m.self_attention_layers[0].shape, (Shape{32 * 32, 32 * 32}));
    EXPECT_EQ(m.self_attention_layers[1].shape, (Shape{16 * 16, 16 * 16}));
    EXPECT_EQ(m.feature_shape, (Shape{4, 64, 64}));
    EXPECT_EQ(m.cross_attention_grids, (std::vector<GridSize>{{32, 32}, {16, 16}}));
    EXPECT_EQ(manifest_from_json(to_json(m)).self_attention_layers, m.self_attention_layers);
}

TEST(ToyBackend, EncodeProducesLatentShape) {
    auto be = make_toy_backend(0);
    const Tensor z = be->encode(ImageRGB(512, 512, 0.3));
    EXPECT_EQ(z.shape(), (Shape{4, 64, 64}));
}

TEST(ToyBackend, ConstantBackendIgnoresLatent) {
    auto be = make_constant_backend(0.25, small());
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Tensor z = random_tensor({4, 8, 8}, seed);
        const Tensor eps = be->predict_noise(z, 501, Conditioning::text("x"), false).noise;
        for (std::size_t i = 0; i < eps.size(); ++i)
            ASSERT_EQ(eps[i], 0.25);
    }
}

TEST(ToyBackend, PredictionIsDeterministic) {
    auto a = make_toy_backend(7, small());
    auto b = make_toy_backend(7, small());
    const Tensor z = random_tensor({4, 8, 8}, 1);
    const Conditioning cond = image_cond(*a, 0.8, BinaryMask(kSize, kSize, 1));
    const NoisePrediction p1 = a->predict_noise(z, 301, cond, true);
    const NoisePrediction p2 = a->predict_noise(z, 301, cond, true);
    const NoisePrediction p3 = b->predict_noise(z, 301, cond, true);
    EXPECT_EQ(p1.noise, p2.noise);
    EXPECT_EQ(p1.noise, p3.noise);
    EXPECT_EQ(*p1.internals, *p3.internals);
}

TEST(ToyBackend, SeedsChangeWeights) {
    const Tensor z = random_tensor({4, 8, 8}, 1);
    auto a = make_toy_backend(1, small());
    auto b = make_toy_backend(2, small());
    EXPECT_NE(a->predict_noise(z, 1, Conditioning::null(), false).noise,
              b->predict_noise(z, 1, Conditioning::null(), false).noise);
}

TEST(ToyBackend, InternalsHaveTwoRowStochasticMaps) {
    auto be = make_toy_backend(0, small());
    for (int timestep : {1, 501, 981}) {
        const Tensor z = random_tensor({4, 8, 8}, static_cast<std::uint64_t>(timestep));
        const NoisePrediction p = be->predict_noise(z, timestep, Conditioning::text("cup"), true);
        ASSERT_TRUE(p.internals);
        ASSERT_EQ(p.internals->self_attn_maps.size(), 2u);
        for (std::size_t l = 0; l < 2; ++l) {
            const Tensor& map = p.internals->self_attn_maps[l];
            EXPECT_EQ(map.shape(), be->manifest().self_attention_layers[l].shape);
            const std::size_t n = map.dim(1);
            for (std::size_t r = 0; r < map.dim(0); ++r) {
                double sum = 0.0;
                for (std::size_t c = 0; c < n; ++c)
                    sum += map[r * n + c];
                EXPECT_NEAR(sum, 1.0, 1e-6);
            }
        }
        EXPECT_EQ(p.internals->features.shape(), be->manifest().feature_shape);
    }
}

TEST(ToyBackend, InternalsOnlyWhenRequested) {
    auto be = make_toy_backend(0, small());
    EXPECT_FALSE(be->predict_noise(random_tensor({4, 8, 8}, 1), 1, Conditioning::null(), false).internals);
}

TEST(ToyBackend, FeaturesAreLinearInLatent) {
    auto be = make_toy_backend(0, small());
    const Tensor a = random_tensor({4, 8, 8}, 1), b = random_tensor({4, 8, 8}, 2);
    Tensor sum = a;
    sum += b;
    const auto feat = [&](const Tensor& z) {
        return be->predict_noise(z, 1, Conditioning::null(), true).internals->features;
    };
    Tensor combined = feat(a);
    combined += feat(b);
    EXPECT_LT(max_abs_diff(feat(sum), combined), 1e-12);
}

TEST(ToyBackend, ConditioningModesDiffer) {
    auto be = make_toy_backend(0, small());
    const Tensor z = random_tensor({4, 8, 8}, 3);
    const Tensor null = be->predict_noise(z, 401, Conditioning::null(), false).noise;
    const Tensor text = be->predict_noise(z, 401, Conditioning::text("a cup"), false).noise;
    const Tensor image = be->predict_noise(z, 401, image_cond(*be, 0.8, BinaryMask(kSize, kSize, 1)), false).noise;
    EXPECT_GT(max_abs_diff(null, text), 1e-6);
    EXPECT_GT(max_abs_diff(text, be->predict_noise(z, 401, Conditioning::text("a mug"), false).noise), 1e-6);
    EXPECT_GT(max_abs_diff(image, be->predict_noise(z, 401, Conditioning::text("a marble statue"), false).noise),
              1e-6);
}

TEST(ToyBackend, ZeroMaskEqualsLambdaZero) {
    auto be = make_toy_backend(0, small());
    const Tensor z = random_tensor({4, 8, 8}, 4);
    const BinaryMask empty(kSize, kSize, 0);
    const Tensor off = be->predict_noise(z, 201, image_cond(*be, 0.0, empty), false).noise;
    const Tensor masked = be->predict_noise(z, 201, image_cond(*be, 1.2, empty), false).noise;
    EXPECT_EQ(off, masked);
    EXPECT_EQ(off, be->predict_noise(z, 201, Conditioning::text("a marble statue"), false).noise);
}

TEST(ToyBackend, NullConditioningIgnoresImageFields) {
    auto be = make_toy_backend(0, small());
    const Tensor z = random_tensor({4, 8, 8}, 5);
    Conditioning noisy = image_cond(*be, 1.5, BinaryMask(kSize, kSize, 1));
    noisy.mode = ConditioningMode::Null;
    noisy.prompt.clear();
    EXPECT_EQ(be->predict_noise(z, 101, noisy, false).noise,
              be->predict_noise(z, 101, Conditioning::null(), false).noise);
}

TEST(ToyBackend, InternalsShapesStableAcrossTimesteps) {
    auto be = make_toy_backend(0, small());
    const Tensor z = random_tensor({4, 8, 8}, 6);
    std::vector<Shape> first;
    for (int ts = 1; ts < 1000; ts += 97) {
        const auto internals = *be->predict_noise(z, ts, Conditioning::text("x"), true).internals;
        std::vector<Shape> shapes;
        for (const auto& m : internals.self_attn_maps)
            shapes.push_back(m.shape());
        shapes.push_back(internals.features.shape());
        if (first.empty())
            first = shapes;
        EXPECT_EQ(shapes, first);
    }
}

TEST(ToyBackend, MaterialEmbeddingIsProjectionOfMeanColour) {
    auto be = make_toy_backend(0, small());
    ImageRGB img(2, 2);
    const double px[4][3] = {{0.1, 0.2, 0.3}, {0.5, 0.0, 1.0}, {0.9, 0.4, 0.2}, {0.3, 0.6, 0.1}};
    for (int i = 0; i < 4; ++i)
        for (int c = 0; c < 3; ++c)
            img.at(static_cast<std::size_t>(i / 2), static_cast<std::size_t>(i % 2), static_cast<std::size_t>(c)) =
                px[i][c];
    const double mean[3] = {(0.1 + 0.5 + 0.9 + 0.3) / 4, (0.2 + 0.0 + 0.4 + 0.6) / 4, (0.3 + 1.0 + 0.2 + 0.1) / 4};
    const MaterialEmbedding e = be->embed_material(img);
    const auto& P = be->material_projection();
    ASSERT_EQ(e.tokens.size(), static_cast<std::size_t>(P.rows()));
    for (Eigen::Index r = 0; r < P.rows(); ++r) {
        const double expected = P(r, 0) * mean[0] + P(r, 1) * mean[1] + P(r, 2) * mean[2];
        EXPECT_NEAR(e.tokens[static_cast<std::size_t>(r)], expected, 1e-12);
    }
    EXPECT_EQ(be->embed_material(img), e);
}

TEST(ToyBackend, DecodeInvertsEncodeOnBlockConstantImages) {
    auto be = make_toy_backend(0, small());
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const ImageRGB img = fixtures::block_image(kSize, kSize, seed);
        const ImageRGB back = be->decode(be->encode(img));
        for (std::size_t i = 0; i < img.pixels().size(); ++i)
            ASSERT_NEAR(back.pixels()[i], img.pixels()[i], 1e-12);
    }
}

TEST(ToyBackend, DecodeClampsToUnitRange) {
    auto be = make_toy_backend(0, small());
    const Tensor z = random_tensor({4, 8, 8}, 9, 10.0);
    for (double v : be->decode(z).pixels()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(ToyBackend, ShapeMismatchRejected) {
    auto be = make_toy_backend(0, small());
    EXPECT_THROW(be->predict_noise(Tensor({4, 4, 4}), 1, Conditioning::null(), false), ShapeError);
    EXPECT_THROW(be->encode(ImageRGB(128, 128, 0.5)), ShapeError);
    Conditioning bad = image_cond(*be, 0.5, BinaryMask(kSize, kSize, 1));
    bad.mask_pyramid.pop_back();
    EXPECT_THROW(be->predict_noise(Tensor({4, 8, 8}), 1, bad, false), ShapeError);
}

TEST(ToyBackend, NoisePullbackMatchesFiniteDifferences) {
    auto be = make_toy_backend(3, small());
    BinaryMask mask = fixtures::box_mask(kSize, kSize, 8, 16, 40, 56);
    const Conditioning conds[] = {Conditioning::null(), Conditioning::text("a vase"), image_cond(*be, 0.9, mask)};
    const double h = 1e-3;
    double worst = 0.0;
    for (std::uint64_t trial = 0; trial < 6; ++trial) {
        const Conditioning& cond = conds[trial % 3];
        const int ts = 1 + static_cast<int>(trial) * 160;
        const Tensor z = random_tensor({4, 8, 8}, 100 + trial);
        const Tensor w = random_tensor({4, 8, 8}, 200 + trial);
        const Tensor analytic = be->noise_pullback(z, ts, cond, w);
        const Tensor dir = random_tensor({4, 8, 8}, 300 + trial);
        Tensor zp = z, zm = z;
        axpy(h, dir, zp);
        axpy(-h, dir, zm);
        const double fd = (dot(w, be->predict_noise(zp, ts, cond, false).noise) -
                           dot(w, be->predict_noise(zm, ts, cond, false).noise)) /
                          (2 * h);
        const double an = dot(analytic, dir);
        const double rel = std::abs(fd - an) / std::max(std::abs(fd), 1e-12);
        worst = std::max(worst, rel);
        EXPECT_LT(rel, 1e-4) << "trial " << trial << " fd=" << fd << " analytic=" << an;
    }
    RecordProperty("worst_rel_err", std::to_string(worst));
}

TEST(ToyBackend, InternalsPullbackMatchesFiniteDifferences) {
    auto be = make_toy_backend(4, small());
    const Conditioning cond = Conditioning::text("a vase");
    const double h = 1e-3;
    for (std::uint64_t trial = 0; trial < 5; ++trial) {
        const int ts = 21 + static_cast<int>(trial) * 200;
        const Tensor z = random_tensor({4, 8, 8}, 400 + trial);
        DenoiserInternals weights = *be->predict_noise(random_tensor({4, 8, 8}, 500 + trial), ts, cond, true).internals;
        const auto scalar = [&](const Tensor& zz) {
            const DenoiserInternals in = *be->predict_noise(zz, ts, cond, true).internals;
            double s = dot(in.features, weights.features);
            for (std::size_t l = 0; l < in.self_attn_maps.size(); ++l)
                s += 1e3 * dot(in.self_attn_maps[l], weights.self_attn_maps[l]);
            return s;
        };
        const InternalsPullback pull = be->internals_pullback(z, ts, cond, [&](const DenoiserInternals&) {
            DenoiserInternals d = weights;
            for (auto& m : d.self_attn_maps)
                m *= 1e3;
            return d;
        });
        const Tensor dir = random_tensor({4, 8, 8}, 600 + trial);
        Tensor zp = z, zm = z;
        axpy(h, dir, zp);
        axpy(-h, dir, zm);
        const double fd = (scalar(zp) - scalar(zm)) / (2 * h);
        const double an = dot(pull.latent_grad, dir);
        EXPECT_LT(std::abs(fd - an) / std::max(std::abs(fd), 1e-12), 1e-4) << "fd=" << fd << " analytic=" << an;
    }
}

TEST(ToyBackend, PassCounting) {
    auto be = make_toy_backend(0, small());
    const Tensor z = random_tensor({4, 8, 8}, 1);
    be->predict_noise(z, 1, Conditioning::null(), false);
    be->predict_noise(z, 1, Conditioning::null(), true);
    be->internals_pullback(z, 1, Conditioning::text("x"), [](const DenoiserInternals& cur) { return cur; });
    EXPECT_EQ(be->pass_count(), 3u);
    be->embed_material(ImageRGB(8, 8, 0.5));
    be->decode(z);
    EXPECT_EQ(be->pass_count(), 3u);
    be->reset_pass_count();
    EXPECT_EQ(be->pass_count(), 0u);
}
