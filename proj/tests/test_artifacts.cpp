// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>

#include "matfuse/core/image_io.hpp"
#include "matfuse/denoiser/toy_backend.hpp"
#include "matfuse/errors.hpp"
#include "matfuse/pipeline/artifacts.hpp"
#include "test_util.hpp"

using namespace matfuse;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::size_t kSize = 64;

TransferRequest make_request() {
    TransferRequest r;
    r.x_init = fixtures::block_image(kSize, kSize, 1);
    r.object_mask = fixtures::box_mask(kSize, kSize, 16, 16, 48, 40);
    r.y_im = fixtures::block_image(32, 32, 2);
    r.prompts = {"a cup", "a cup made of stone", ""};
    r.config.T = 10;
    r.config.tau_g = 6;
    r.config.tau_m = 8;
    return r;
}

std::unique_ptr<ToyDenoiser> toy() { return make_toy_backend(0, {kSize, kSize, std::nullopt}); }

std::vector<std::string> lines(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    for (std::string l; std::getline(in, l);)
        out.push_back(l);
    return out;
}

}  // namespace

TEST(CacheKey, SensitiveToEveryInput) {
    auto be = toy();
    const TransferRequest r = make_request();
    const std::string base = trajectory_cache_key(r.x_init, "a cup", 10, be->manifest());
    EXPECT_EQ(base.size(), 64u);
    EXPECT_EQ(trajectory_cache_key(r.x_init, "a cup", 10, be->manifest()), base);
    EXPECT_NE(trajectory_cache_key(r.x_init, "a mug", 10, be->manifest()), base);
    EXPECT_NE(trajectory_cache_key(r.x_init, "a cup", 11, be->manifest()), base);
    ImageRGB other = r.x_init;
    other.at(3, 3, 1) = std::nextafter(other.at(3, 3, 1), 1.0);
    EXPECT_NE(trajectory_cache_key(other, "a cup", 10, be->manifest()), base);
    BackendManifest m = be->manifest();
    m.name = "other";
    EXPECT_NE(trajectory_cache_key(r.x_init, "a cup", 10, m), base);
}

TEST(TrajectoryCache, MissThenHitReturnsIdenticalTrajectory) {
    const TrajectoryCache cache(fixtures::temp_dir("cache_hit"));
    const TransferRequest r = make_request();
    auto be = toy();
    bool hit = true;
    const InversionTrajectory first = cache.obtain(r, *be, &hit);
    EXPECT_FALSE(hit);
    EXPECT_EQ(be->pass_count(), 10u);
    const InversionTrajectory second = cache.obtain(r, *be, &hit);
    EXPECT_TRUE(hit);
    EXPECT_EQ(be->pass_count(), 10u);
    ASSERT_EQ(first.latents.size(), second.latents.size());
    for (std::size_t i = 0; i < first.latents.size(); ++i)
        EXPECT_EQ(first.latents[i], second.latents[i]);
    // Results from a cached trajectory equal a fresh run.
    auto fresh = toy();
    EXPECT_EQ(material_transfer(r, *be, second).final_latent, material_transfer(r, *fresh).final_latent);
}

TEST(TrajectoryCache, CorruptEntryIsAMiss) {
    const TrajectoryCache cache(fixtures::temp_dir("cache_corrupt"));
    const TransferRequest r = make_request();
    auto be = toy();
    cache.obtain(r, *be);
    const std::string key = trajectory_cache_key(r.x_init, r.prompts.source, 10, be->manifest());
    std::ofstream(cache.entry_dir(key) / "trajectory.json") << "{broken";
    EXPECT_FALSE(cache.load(key).has_value());
    bool hit = true;
    cache.obtain(r, *be, &hit);
    EXPECT_FALSE(hit);
    EXPECT_TRUE(cache.load(key).has_value());
}

TEST(TrajectoryCache, DefaultDirHonoursEnvironment) {
    ::setenv("MATFUSE_CACHE_DIR", "/tmp/matfuse-cache-test", 1);
    EXPECT_EQ(default_cache_dir(), fs::path("/tmp/matfuse-cache-test"));
    ::unsetenv("MATFUSE_CACHE_DIR");
    EXPECT_NE(default_cache_dir(), fs::path("/tmp/matfuse-cache-test"));
}

TEST(RunDirectory, RefusesNonEmptyWithoutForce) {
    const fs::path dir = fixtures::temp_dir("run_force");
    std::ofstream(dir / "old.txt") << "x";
    try {
        RunDirectory::create(dir, false);
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.field(), "out");
    }
    EXPECT_TRUE(fs::exists(dir / "old.txt"));
    RunDirectory::create(dir, true);
    EXPECT_FALSE(fs::exists(dir / "old.txt"));
    EXPECT_NO_THROW(RunDirectory::create(dir / "fresh", false));
}

TEST(RunDirectory, FullRunWritesEveryArtifact) {
    const fs::path dir = fixtures::temp_dir("run_full") / "run";
    RunDirectory run = RunDirectory::create(dir, false);
    auto be = toy();
    const TransferRequest r = make_request();
    TransferHooks hooks;
    hooks.preview_every = 3;
    const TransferResult result = run_transfer(r, *be, run, {}, hooks);

    for (const char* f : {"inputs/image.png", "inputs/mask.png", "inputs/material.png", "inputs/request.json",
                          "trajectory/trajectory.json", "steps.csv", "result.png", "manifest.json"})
        EXPECT_TRUE(fs::exists(dir / f)) << f;
    EXPECT_EQ(load_image(dir / "result.png"), decode_image(encode_png(result.x_edit)));
    EXPECT_EQ(load_mask(dir / "inputs/mask.png"), r.object_mask);
    const auto csv = lines(dir / "steps.csv");
    ASSERT_EQ(csv.size(), 11u);
    EXPECT_EQ(csv[0], step_log_header());
    for (int s : {3, 6, 9})
        EXPECT_TRUE(fs::exists(run.preview_path(s))) << s;
    const json manifest = json::parse(std::ifstream(dir / "manifest.json"));
    EXPECT_EQ(manifest["config"]["T"], 10);
    EXPECT_EQ(manifest["backend"]["name"], "toy");
    EXPECT_EQ(manifest["trajectory_cache_hit"], false);
    EXPECT_EQ(manifest["sampling_passes"], 6 * 4 + 4 * 2);
    EXPECT_EQ(load_trajectory(dir / "trajectory").steps(), 10);
}

TEST(RunDirectory, CancelledRunKeepsStepLog) {
    const fs::path dir = fixtures::temp_dir("run_cancel") / "run";
    RunDirectory run = RunDirectory::create(dir, false);
    auto be = toy();
    int seen = 0;
    TransferHooks hooks;
    hooks.on_step = [&seen](const StepRecord&) { ++seen; };
    hooks.cancelled = [&seen] { return seen >= 4; };
    EXPECT_THROW(run_transfer(make_request(), *be, run, {}, hooks), CancelledError);
    EXPECT_EQ(lines(dir / "steps.csv").size(), 5u);
    EXPECT_FALSE(fs::exists(dir / "result.png"));
}

TEST(AtomicWrite, ReplacesWholeFile) {
    const fs::path dir = fixtures::temp_dir("atomic");
    write_file_atomic(dir / "a.txt", "first version");
    write_file_atomic(dir / "a.txt", "v2");
    std::ifstream in(dir / "a.txt");
    std::string s((std::istreambuf_iterator<char>(in)), {});
    EXPECT_EQ(s, "v2");
    std::size_t files = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir))
        ++files;
    EXPECT_EQ(files, 1u);
}
