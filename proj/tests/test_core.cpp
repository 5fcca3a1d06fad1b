// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "matfuse/core/config.hpp"
#include "matfuse/core/hash.hpp"
#include "matfuse/core/image_io.hpp"
#include "matfuse/core/mask.hpp"
#include "matfuse/core/types.hpp"
#include "matfuse/errors.hpp"
#include "test_util.hpp"

using namespace matfuse;
using nlohmann::json;

namespace {

std::string field_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const ValidationError& e) {
        return e.field();
    }
    return "<no error>";
}

BinaryMask random_mask(std::size_t h, std::size_t w, double density, std::mt19937_64& rng) {
    std::bernoulli_distribution bit(density);
    BinaryMask m(h, w, 0);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            m.at(y, x) = bit(rng) ? 1 : 0;
    return m;
}

}  // namespace

TEST(Config, DefaultsMatchReferenceTable) {
    const TransferConfig c = make_config({});
    EXPECT_EQ(c.w, 7.5);
    EXPECT_EQ(c.v_self, 700000.0);
    EXPECT_EQ(c.v_feat, 1500.0);
    EXPECT_EQ(c.r_lower, 0.33);
    EXPECT_EQ(c.r_upper, 3.0);
    EXPECT_EQ(c.tau_g, 30);
    EXPECT_EQ(c.tau_m, 40);
    EXPECT_EQ(c.T, 50);
    EXPECT_EQ(c.lam, 0.8);
    EXPECT_EQ(c.seed, 0);
}

TEST(Config, SnapshotOfSerializedDefaults) {
    const json expected = json::parse(R"({
        "T": 50, "lam": 0.8, "r_lower": 0.33, "r_upper": 3.0, "seed": 0,
        "tau_g": 30, "tau_m": 40, "v_feat": 1500.0, "v_self": 700000.0, "w": 7.5
    })");
    EXPECT_EQ(to_json(make_config()), expected);
}

TEST(Config, LambdaZeroIsValid) {
    const TransferConfig c = make_config({{"lam", 0}});
    EXPECT_EQ(c.lam, 0.0);
    EXPECT_NO_THROW(c.validate());
}

TEST(Config, InvertedRescaleBoundsRejected) {
    EXPECT_EQ(field_of([] { make_config({{"r_lower", 5}, {"r_upper", 3}}); }), "r_lower");
}

TEST(Config, UnknownKeyRejected) {
    EXPECT_EQ(field_of([] { make_config({{"guidance", 1}}); }), "guidance");
}

TEST(Config, BoundViolationsNameTheField) {
    EXPECT_EQ(field_of([] { make_config({{"lam", -0.1}}); }), "lam");
    EXPECT_EQ(field_of([] { make_config({{"v_self", -1}}); }), "v_self");
    EXPECT_EQ(field_of([] { make_config({{"v_feat", -1}}); }), "v_feat");
    EXPECT_EQ(field_of([] { make_config({{"tau_g", 51}}); }), "tau_g");
    EXPECT_EQ(field_of([] { make_config({{"tau_m", -1}}); }), "tau_m");
    EXPECT_EQ(field_of([] { make_config({{"r_lower", 0}}); }), "r_lower");
    EXPECT_EQ(field_of([] { make_config({{"T", 0}}); }), "T");
    EXPECT_EQ(field_of([] { make_config({{"T", 2.5}}); }), "T");
    EXPECT_EQ(field_of([] { make_config({{"w", "high"}}); }), "w");
}

TEST(Config, RoundTripThroughFile) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto dir = fixtures::temp_dir("config");
    for (int i = 0; i < 20; ++i) {
        TransferConfig c;
        c.w = 10.0 * u(rng);
        c.lam = 1.5 * u(rng);
        c.v_self = 1e6 * u(rng);
        c.v_feat = 1e4 * u(rng);
        c.T = 10 + i;
        c.tau_g = i % (c.T + 1);
        c.tau_m = (3 * i) % (c.T + 1);
        c.r_lower = 0.01 + u(rng);
        c.r_upper = c.r_lower + u(rng);
        c.seed = static_cast<std::int64_t>(rng() >> 1);
        save_config_file(c, dir / "c.json");
        EXPECT_EQ(load_config_file(dir / "c.json"), c);
        EXPECT_EQ(make_config(to_json(c)), c);
    }
}

TEST(Mask, AllOnesAndAllZerosDownsample) {
    const BinaryMask ones(512, 512, 1), zeros(512, 512, 0);
    const BinaryMask a = downsample_mask(ones, {64, 64});
    const BinaryMask b = downsample_mask(zeros, {64, 64});
    EXPECT_EQ(a.count(), 64u * 64u);
    EXPECT_EQ(b.count(), 0u);
    EXPECT_EQ(a.resolution().space, MaskSpace::Latent);
}

TEST(Mask, TwoByTwoMaxPool) {
    const BinaryMask m(2, 2, std::vector<std::uint8_t>{1, 0, 0, 0});
    const BinaryMask d = downsample_mask(m, {1, 1});
    ASSERT_EQ(d.size(), 1u);
    EXPECT_EQ(d[0], 1);
}

TEST(Mask, NonDivisibleTargetRejected) {
    EXPECT_THROW(downsample_mask(BinaryMask(10, 10, 1), {3, 3}), ValidationError);
}

TEST(Mask, NonBinaryValuesRejected) {
    EXPECT_THROW(BinaryMask(1, 2, std::vector<std::uint8_t>{0, 2}), ValidationError);
}

TEST(Mask, PyramidOfFullMask) {
    const auto levels = mask_pyramid(BinaryMask(512, 512, 1), {{64, 64}, {32, 32}});
    ASSERT_EQ(levels.size(), 2u);
    EXPECT_EQ(levels[0].count(), 64u * 64u);
    EXPECT_EQ(levels[1].count(), 32u * 32u);
    EXPECT_EQ(levels[1].resolution(), (MaskResolution{MaskSpace::Attention, 1}));
}

TEST(Mask, SinglePixelPyramid) {
    BinaryMask m(512, 512, 0);
    m.at(0, 0) = 1;
    const auto levels = mask_pyramid(m, {{64, 64}});
    EXPECT_EQ(levels[0].count(), 1u);
    EXPECT_EQ(levels[0].at(0, 0), 1);
}

TEST(Mask, EmptyMaskRejected) {
    EXPECT_THROW(require_nonempty(BinaryMask(8, 8, 0)), ValidationError);
}

TEST(Mask, MaxPoolNeverEmptiesNonemptyMask) {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<std::size_t> pos(0, 63);
    for (int i = 0; i < 200; ++i) {
        BinaryMask m(64, 64, 0);
        m.at(pos(rng), pos(rng)) = 1;
        for (std::size_t target : {32u, 16u, 8u, 4u, 1u})
            EXPECT_GT(downsample_mask(m, {target, target}).count(), 0u);
    }
}

TEST(Mask, DownsampleMatchesBruteForceMaxPool) {
    std::mt19937_64 rng(6);
    for (int i = 0; i < 20; ++i) {
        const BinaryMask m = random_mask(32, 48, 0.03, rng);
        const BinaryMask d = downsample_mask(m, {8, 12});
        for (std::size_t y = 0; y < 8; ++y)
            for (std::size_t x = 0; x < 12; ++x) {
                std::uint8_t any = 0;
                for (std::size_t dy = 0; dy < 4; ++dy)
                    for (std::size_t dx = 0; dx < 4; ++dx)
                        any |= m.at(y * 4 + dy, x * 4 + dx);
                EXPECT_EQ(d.at(y, x), any);
            }
    }
}

TEST(Mask, DownsampleIdempotentAtEqualResolution) {
    std::mt19937_64 rng(7);
    const BinaryMask m = random_mask(16, 16, 0.5, rng);
    const BinaryMask d = downsample_mask(m, {16, 16});
    EXPECT_EQ(d.values(), m.values());
    EXPECT_EQ(downsample_mask(d, {16, 16}), d);
}

TEST(Image, ValidationRules) {
    EXPECT_NO_THROW(ImageRGB(16, 24, 0.5).validate());
    EXPECT_THROW(ImageRGB(10, 16, 0.5).validate(), ValidationError);
    EXPECT_THROW(ImageRGB(16, 16, 1.5).validate(), ValidationError);
    EXPECT_NO_THROW(ImageRGB(3, 5, 0.5).validate_range());
}

TEST(Prompts, SourceRequired) {
    EXPECT_THROW((PromptSet{"", "x", ""}).validate(), ValidationError);
    EXPECT_THROW((PromptSet{"a", "b", "not empty"}).validate(), ValidationError);
    EXPECT_NO_THROW((PromptSet{"a", "", ""}).validate());
}

TEST(Trajectory, ValidationChecksLengthAndOrder) {
    InversionTrajectory traj;
    traj.source_prompt = "x";
    for (int t = 0; t <= 3; ++t)
        traj.latents.push_back({Tensor({1, 1, 1}), t});
    EXPECT_NO_THROW(traj.validate(3));
    EXPECT_THROW(traj.validate(4), ValidationError);
    std::swap(traj.latents[1], traj.latents[2]);
    EXPECT_THROW(traj.validate(3), ValidationError);
}

TEST(ImageIo, PngRoundTripIsExactOn8BitValues) {
    ImageRGB img(16, 8);
    for (std::size_t i = 0; i < img.pixels().size(); ++i)
        img.pixels()[i] = static_cast<double>((i * 37) % 256) / 255.0;
    const ImageRGB back = decode_image(encode_png(img));
    ASSERT_EQ(back.height(), 16u);
    ASSERT_EQ(back.width(), 8u);
    for (std::size_t i = 0; i < img.pixels().size(); ++i)
        EXPECT_NEAR(back.pixels()[i], img.pixels()[i], 1e-12);
}

TEST(ImageIo, MaskPngRoundTripAndThreshold) {
    const BinaryMask m = fixtures::box_mask(16, 16, 2, 3, 9, 12);
    EXPECT_EQ(decode_mask(encode_png(m)), m);

    const auto dir = fixtures::temp_dir("mask_io");
    const ImageRGB gray(8, 8, 100.0 / 255.0);
    save_image(gray, dir / "gray.png");
    EXPECT_EQ(load_mask(dir / "gray.png").count(), 0u);
    save_image(ImageRGB(8, 8, 200.0 / 255.0), dir / "light.png");
    EXPECT_EQ(load_mask(dir / "light.png").count(), 64u);
}

TEST(ImageIo, ResizeAndUndecodableInput) {
    const ImageRGB img(32, 32, 0.25);
    const ImageRGB r = resize_image(img, {16, 8});
    EXPECT_EQ(r.height(), 16u);
    EXPECT_EQ(r.width(), 8u);
    EXPECT_NEAR(r.at(3, 3, 1), 0.25, 1e-12);
    EXPECT_THROW(decode_image("not an image"), IoError);
}

TEST(Hash, Sha256KnownVectors) {
    EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    EXPECT_EQ(Sha256().update("a").update("bc").hex_digest(), sha256_hex("abc"));
}
