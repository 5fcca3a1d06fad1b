// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "lpips_fixture.hpp"
#include "matfuse/core/image_io.hpp"
#include "matfuse/errors.hpp"
#include "matfuse/eval/clip.hpp"
#include "matfuse/eval/dataset.hpp"
#include "matfuse/eval/lpips.hpp"
#include "matfuse/eval/safetensors.hpp"
#include "matfuse/eval/similarity.hpp"
#include "test_util.hpp"

using namespace matfuse;
using namespace matfuse::eval;
using nlohmann::json;

namespace {

const Lpips& synthetic_lpips() {
    static const Lpips net(fixtures::synthetic_lpips_weights(), "synthetic-2026");
    return net;
}

/// Tiles a random tile x tile pattern; every crop aligned to the tile period is identical.
ImageRGB tiled(std::size_t size, std::size_t tile, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<double> pattern(tile * tile * 3);
    for (double& v : pattern)
        v = uni(rng);
    ImageRGB img(size, size);
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                img.at(y, x, c) = pattern[((y % tile) * tile + x % tile) * 3 + c];
    return img;
}

ImageRGB noise_image(std::size_t h, std::size_t w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    ImageRGB img(h, w);
    for (double& v : img.pixels())
        v = uni(rng);
    return img;
}

std::vector<std::vector<double>> random_vectors(std::size_t n, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    std::vector<std::vector<double>> out(n, std::vector<double>(d));
    for (auto& v : out)
        for (double& x : v)
            x = normal(rng);
    return out;
}

/// Maps each crop to a one-hot vector chosen by its top-left corner.
class OneHotEmbedder final : public ImageEmbedder {
public:
    explicit OneHotEmbedder(std::size_t offset) : m_offset(offset) {}
    std::string name() const override { return "one-hot"; }
    std::vector<double> embed(const ImageRGB& image) const override {
        std::vector<double> v(8, 0.0);
        v[m_offset + (image.at(0, 0, 0) > 0.5 ? 1 : 0)] = 1.0;
        return v;
    }

private:
    std::size_t m_offset;
};

std::size_t grid_positions(std::size_t lo, std::size_t hi, std::size_t extent, std::size_t size, std::size_t step) {
    std::size_t n = 0;
    for (std::size_t p = 0; p + size <= extent; p += step)
        n += p >= lo && p + size <= hi;
    return n;
}

}  // namespace

// Reference values from tests/oracles/lpips_oracle.py (lpips 0.1.4, AlexNet v0.1 heads).
TEST(Lpips, MatchesReferenceImplementation) {
    struct Case {
        std::size_t h, w;
        double phase_a, phase_b, expected;
    };
    const Case cases[] = {
        {64, 64, 0.0, 0.7, 1.28763902},
        {96, 80, 0.3, 1.9, 1.40359902},
        {64, 64, 0.5, 0.55, 0.0275208205},
    };
    for (const Case& c : cases) {
        const double d = synthetic_lpips().distance(fixtures::wave_image(c.h, c.w, c.phase_a),
                                                    fixtures::wave_image(c.h, c.w, c.phase_b));
        EXPECT_NEAR(d, c.expected, 1e-4) << c.h << "x" << c.w << " " << c.phase_a << "/" << c.phase_b;
    }
}

TEST(Lpips, IdentityAndSymmetry) {
    const ImageRGB a = noise_image(64, 96, 1), b = noise_image(64, 96, 2);
    EXPECT_EQ(synthetic_lpips().distance(a, a), 0.0);
    const double ab = synthetic_lpips().distance(a, b), ba = synthetic_lpips().distance(b, a);
    EXPECT_GT(ab, 0.0);
    EXPECT_NEAR(ab, ba, 1e-6);
    double sum = 0.0;
    for (double v : synthetic_lpips().layer_distances(a, b)) {
        EXPECT_GE(v, 0.0);
        sum += v;
    }
    EXPECT_DOUBLE_EQ(sum, ab);
}

TEST(Lpips, RejectsMismatchedDims) {
    EXPECT_THROW(synthetic_lpips().distance(ImageRGB(64, 64, 0.5), ImageRGB(64, 72, 0.5)), ShapeError);
}

TEST(Lpips, MissingOrIncompleteWeights) {
    const auto dir = fixtures::temp_dir("lpips_weights");
    try {
        Lpips::load(dir / "absent.safetensors");
        FAIL() << "expected BackendError";
    } catch (const BackendError& e) {
        EXPECT_NE(std::string(e.what()).find("missing perceptual weights"), std::string::npos);
    }
    TensorMap partial = fixtures::synthetic_lpips_weights();
    partial.erase("lin3.weight");
    EXPECT_THROW((void)Lpips(partial), BackendError);
}

TEST(Lpips, LoadsFromSafetensorsFile) {
    const auto dir = fixtures::temp_dir("lpips_file");
    write_safetensors(fixtures::synthetic_lpips_weights(), dir / "lpips_alex.safetensors");
    const Lpips net = Lpips::load(dir / "lpips_alex.safetensors");
    const ImageRGB a = fixtures::wave_image(64, 64, 0.0), b = fixtures::wave_image(64, 64, 0.7);
    EXPECT_EQ(net.distance(a, b), synthetic_lpips().distance(a, b));
}

TEST(Safetensors, RoundTripF32) {
    const auto dir = fixtures::temp_dir("st_roundtrip");
    TensorMap m;
    m["a"] = {{2, 3}, {1, 2, 3, 4, 5, 6}};
    m["b.c"] = {{1}, {-0.5f}};
    write_safetensors(m, dir / "x.safetensors");
    const TensorMap back = read_safetensors(dir / "x.safetensors");
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back.at("a").shape, (std::vector<std::int64_t>{2, 3}));
    EXPECT_EQ(back.at("a").values, m["a"].values);
    EXPECT_EQ(back.at("b.c").values, m["b.c"].values);
}

TEST(Safetensors, ReadsHalfPrecision) {
    const auto dir = fixtures::temp_dir("st_half");
    // F16 1.0 = 0x3C00, -2.0 = 0xC000; BF16 0.5 = 0x3F00.
    const std::string header = R"({"h":{"dtype":"F16","shape":[2],"data_offsets":[0,4]},)"
                               R"("b":{"dtype":"BF16","shape":[1],"data_offsets":[4,6]}})";
    std::ofstream out(dir / "h.safetensors", std::ios::binary);
    const std::uint64_t n = header.size();
    out.write(reinterpret_cast<const char*>(&n), 8);
    out << header;
    const unsigned char data[] = {0x00, 0x3C, 0x00, 0xC0, 0x00, 0x3F};
    out.write(reinterpret_cast<const char*>(data), sizeof data);
    out.close();
    const TensorMap m = read_safetensors(dir / "h.safetensors");
    EXPECT_EQ(m.at("h").values, (std::vector<float>{1.0f, -2.0f}));
    EXPECT_EQ(m.at("b").values, (std::vector<float>{0.5f}));
}

TEST(Safetensors, CorruptFileIsIoError) {
    const auto dir = fixtures::temp_dir("st_bad");
    std::ofstream(dir / "bad.safetensors") << "short";
    EXPECT_THROW(read_safetensors(dir / "bad.safetensors"), IoError);
    EXPECT_THROW(read_safetensors(dir / "absent.safetensors"), IoError);
}

TEST(Crops, FullMaskGridCounts) {
    const ImageRGB img(512, 512, 0.5);
    EXPECT_EQ(extract_all_crops(img, {64}, 64).size(), 64u);
    EXPECT_EQ(extract_all_crops(img, {64}).size(), 15u * 15u);
    EXPECT_EQ(extract_all_crops(img, {128}).size(), 7u * 7u);
    EXPECT_EQ(extract_all_crops(img).size(), 15u * 15u + 7u * 7u);
}

TEST(Crops, BoxMasksMatchAnalyticCounts) {
    std::mt19937_64 rng(12);
    std::uniform_int_distribution<std::size_t> coord(0, 256);
    for (int i = 0; i < 30; ++i) {
        std::size_t y0 = coord(rng), y1 = coord(rng), x0 = coord(rng), x1 = coord(rng);
        if (y0 > y1)
            std::swap(y0, y1);
        if (x0 > x1)
            std::swap(x0, x1);
        const BinaryMask mask = fixtures::box_mask(256, 256, y0, x0, y1, x1);
        std::size_t expected = 0;
        for (std::size_t size : {64u, 128u})
            expected += grid_positions(y0, y1, 256, size, size / 2) * grid_positions(x0, x1, 256, size, size / 2);
        if (expected == 0) {
            EXPECT_THROW(extract_crops(ImageRGB(256, 256, 0.1), mask), ValidationError);
            continue;
        }
        EXPECT_EQ(extract_crops(ImageRGB(256, 256, 0.1), mask).size(), expected);
    }
}

TEST(Crops, PixelsEqualSourceAtOffset) {
    const ImageRGB img = noise_image(160, 192, 3);
    const auto crops = extract_crops(img, fixtures::box_mask(160, 192, 10, 20, 150, 180), {64, 128}, 0);
    ASSERT_FALSE(crops.empty());
    for (const Crop& c : crops) {
        EXPECT_TRUE(c.size == 64 || c.size == 128);
        EXPECT_EQ(c.y % (c.size / 2), 0u);
        for (std::size_t y = 0; y < c.size; y += 7)
            for (std::size_t x = 0; x < c.size; x += 5)
                for (std::size_t ch = 0; ch < 3; ++ch)
                    ASSERT_EQ(c.pixels.at(y, x, ch), img.at(c.y + y, c.x + x, ch));
    }
}

TEST(Crops, MaskTooSmall) {
    const BinaryMask mask = fixtures::box_mask(256, 256, 0, 0, 63, 200);
    try {
        extract_crops(ImageRGB(256, 256, 0.5), mask);
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.field(), "mask");
        EXPECT_NE(std::string(e.what()).find("mask too small"), std::string::npos);
    }
    // Sizes larger than the image are skipped rather than rejected.
    EXPECT_EQ(extract_all_crops(ImageRGB(96, 96, 0.5), {64, 128}).size(), 4u);
    EXPECT_THROW(extract_all_crops(ImageRGB(32, 32, 0.5)), ValidationError);
}

TEST(Similarity, SelfSimilarityOfMaterialIsOne) {
    const ImageRGB material = tiled(256, 32, 4);
    const TextureStatsEmbedder embedder;
    const SimilarityResult r =
        crop_clip_similarity(material, BinaryMask(256, 256, 1), material, embedder);
    EXPECT_NEAR(r.score, 1.0, 1e-4);
    EXPECT_EQ(r.edited_crops, 7u * 7u + 3u * 3u);
    EXPECT_EQ(r.material_crops, r.edited_crops);
}

TEST(Similarity, OrthogonalEmbeddingsScoreZero) {
    const ImageRGB a(64, 128, 0.9), b(64, 64, 0.1);
    EXPECT_EQ(crop_clip_similarity(a, BinaryMask(64, 128, 1), b, OneHotEmbedder(0), {64}, 32).score, 0.0);
    const auto u = std::vector<std::vector<double>>{{1, 0, 0}, {0, 1, 0}};
    const auto v = std::vector<std::vector<double>>{{0, 0, 2}};
    EXPECT_EQ(mean_pairwise_cosine(u, v), 0.0);
}

TEST(Similarity, PairwiseMeanMatchesDoubleLoop) {
    // 3 edited crops x 2 material crops.
    const ImageRGB edited = noise_image(64, 192, 5), material = noise_image(64, 128, 6);
    const TextureStatsEmbedder embedder;
    const auto ce = extract_crops(edited, BinaryMask(64, 192, 1), {64}, 64);
    const auto cm = extract_all_crops(material, {64}, 64);
    ASSERT_EQ(ce.size(), 3u);
    ASSERT_EQ(cm.size(), 2u);
    double sum = 0.0;
    for (const Crop& a : ce)
        for (const Crop& b : cm) {
            const auto ea = embedder.embed(a.pixels), eb = embedder.embed(b.pixels);
            double dot = 0.0, na = 0.0, nb = 0.0;
            for (std::size_t i = 0; i < ea.size(); ++i) {
                dot += ea[i] * eb[i];
                na += ea[i] * ea[i];
                nb += eb[i] * eb[i];
            }
            sum += dot / std::sqrt(na * nb);
        }
    const double s = crop_clip_similarity(edited, BinaryMask(64, 192, 1), material, embedder, {64}, 64).score;
    EXPECT_NEAR(s, sum / 6.0, 1e-9);

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto a = random_vectors(3 + seed % 4, 16, seed), b = random_vectors(2 + seed % 3, 16, 100 + seed);
        EXPECT_NEAR(mean_pairwise_cosine(a, b), mean_pairwise_cosine_naive(a, b), 1e-9);
    }
}

TEST(Similarity, PermutationAndDuplication) {
    std::mt19937_64 rng(7);
    auto a = random_vectors(6, 12, 1), b = random_vectors(5, 12, 2);
    const double base = mean_pairwise_cosine(a, b);
    std::shuffle(a.begin(), a.end(), rng);
    std::shuffle(b.begin(), b.end(), rng);
    EXPECT_NEAR(mean_pairwise_cosine(a, b), base, 1e-12);

    auto a2 = a, b2 = b;
    a2.insert(a2.end(), a.begin(), a.end());
    b2.insert(b2.end(), b.begin(), b.end());
    EXPECT_NEAR(mean_pairwise_cosine(a2, b2), base, 1e-12);

    double lo = 1.0, hi = -1.0;
    for (const auto& u : a)
        for (const auto& v : b) {
            const double c = mean_pairwise_cosine_naive({u}, {v});
            lo = std::min(lo, c);
            hi = std::max(hi, c);
        }
    auto a3 = a;
    a3.push_back(a[2]);
    EXPECT_LE(std::abs(mean_pairwise_cosine(a3, b) - base), hi - lo);
}

TEST(Similarity, EmptySetsRejected) {
    EXPECT_THROW(mean_pairwise_cosine({}, {{1.0}}), ValidationError);
    EXPECT_THROW(mean_pairwise_cosine({{1.0, 0.0}}, {{1.0}}), ValidationError);
}

TEST(TextureStats, DeterministicAndDistinguishing) {
    const TextureStatsEmbedder e;
    const ImageRGB a = noise_image(64, 64, 8);
    EXPECT_EQ(e.embed(a), e.embed(a));
    const double self = mean_pairwise_cosine({e.embed(a)}, {e.embed(a)});
    EXPECT_NEAR(self, 1.0, 1e-12);
    const double cross = mean_pairwise_cosine({e.embed(ImageRGB(64, 64, 0.1))}, {e.embed(ImageRGB(64, 64, 0.9))});
    EXPECT_LT(cross, 0.5);
}

namespace {

struct Dataset {
    std::filesystem::path root;
    DatasetManifest manifest;
    std::vector<ImageRGB> objects;
    std::vector<ImageRGB> materials;
    std::vector<BinaryMask> masks;
};

Dataset make_dataset(const std::string& name) {
    Dataset d;
    d.root = fixtures::temp_dir(name);
    std::filesystem::create_directories(d.root / "images");
    std::ofstream manifest(d.root / "manifest.jsonl");
    for (int i = 0; i < 2; ++i) {
        const std::string id = "pair" + std::to_string(i);
        d.objects.push_back(noise_image(128, 128, 40 + static_cast<std::uint64_t>(i)));
        d.materials.push_back(tiled(128, 32, 50 + static_cast<std::uint64_t>(i)));
        d.masks.push_back(fixtures::box_mask(128, 128, 8, 8, 120, 120 - 8 * static_cast<std::size_t>(i)));
        save_image(d.objects.back(), d.root / "images" / (id + "_obj.png"));
        save_image(d.materials.back(), d.root / "images" / (id + "_mat.png"));
        save_mask(d.masks.back(), d.root / "images" / (id + "_mask.png"));
        manifest << json{{"id", id},
                         {"object_image", "images/" + id + "_obj.png"},
                         {"mask", "images/" + id + "_mask.png"},
                         {"material_image", "images/" + id + "_mat.png"},
                         {"y_src", "a vase"},
                         {"y_trg", "a vase made of stone"}}
                        .dump()
                 << "\n";
    }
    manifest.close();
    d.manifest = load_manifest(d.root / "manifest.jsonl");
    return d;
}

}  // namespace

TEST(Dataset, ManifestLoadsRelativePaths) {
    const Dataset d = make_dataset("ds_manifest");
    ASSERT_EQ(d.manifest.entries.size(), 2u);
    EXPECT_EQ(d.manifest.entries[1].id, "pair1");
    EXPECT_TRUE(std::filesystem::exists(d.manifest.entries[1].material_image));
    EXPECT_EQ(d.manifest.object_count(), 2u);
    EXPECT_EQ(d.manifest.material_count(), 2u);
}

TEST(Dataset, ManifestErrorsNameTheField) {
    const auto dir = fixtures::temp_dir("ds_bad");
    save_image(ImageRGB(64, 64, 0.5), dir / "o.png");
    save_mask(BinaryMask(64, 64, 0), dir / "empty.png");
    const auto field = [&](const json& entry) {
        std::ofstream(dir / "m.jsonl") << entry.dump() << "\n";
        try {
            load_manifest(dir / "m.jsonl");
        } catch (const ValidationError& e) {
            return e.field();
        }
        return std::string("<no error>");
    };
    json ok = {{"object_image", "o.png"}, {"mask", "empty.png"}, {"material_image", "o.png"}, {"y_src", "x"}};
    EXPECT_EQ(field(ok), "entries[0].mask");
    json missing = ok;
    missing["material_image"] = "nope.png";
    EXPECT_EQ(field(missing), "entries[0].material_image");
    json no_prompt = ok;
    no_prompt.erase("y_src");
    EXPECT_EQ(field(no_prompt), "entries[0].y_src");
}

TEST(Dataset, MethodSpecParsing) {
    const MethodResults a = parse_method_results("ours@0.8=/tmp/x");
    EXPECT_EQ(a.method, "ours");
    EXPECT_EQ(a.lambda, 0.8);
    EXPECT_EQ(a.dir, "/tmp/x");
    EXPECT_EQ(a.label(), "ours@0.8");
    EXPECT_FALSE(parse_method_results("zest=out").lambda.has_value());
    EXPECT_THROW(parse_method_results("nodir"), ValidationError);
    EXPECT_THROW(parse_method_results("m@abc=d"), ValidationError);
}

TEST(Dataset, OriginalsAsResultsGiveZeroLpips) {
    const Dataset d = make_dataset("ds_identity");
    const std::filesystem::path dir = d.root / "identity";
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < 2; ++i)
        std::filesystem::copy_file(d.manifest.entries[i].object_image, dir / (d.manifest.entries[i].id + ".png"));
    const EvalReport r =
        evaluate_dataset(d.manifest, {{"identity", std::nullopt, dir}}, synthetic_lpips(), TextureStatsEmbedder());
    ASSERT_EQ(r.records.size(), 2u);
    for (const auto& rec : r.records)
        EXPECT_LT(rec.lpips, 1e-6);
    EXPECT_LT(r.summaries[0].lpips, 1e-6);
    EXPECT_TRUE(r.skipped.empty());
}

TEST(Dataset, MaterialAsResultsMatchesDirectMetrics) {
    const Dataset d = make_dataset("ds_material");
    const std::filesystem::path dir = d.root / "material";
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < 2; ++i)
        save_image(resize_image(d.materials[i], {64, 64}), dir / (d.manifest.entries[i].id + ".png"));
    const TextureStatsEmbedder embedder;
    const EvalReport r = evaluate_dataset(d.manifest, {{"material", 1.1, dir}}, synthetic_lpips(), embedder);
    ASSERT_EQ(r.records.size(), 2u);
    EXPECT_EQ(r.resized, 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        const ImageRGB edited = resize_image(load_image(dir / (d.manifest.entries[i].id + ".png")), {128, 128});
        const ImageRGB original = load_image(d.manifest.entries[i].object_image);
        const ImageRGB material = load_image(d.manifest.entries[i].material_image);
        EXPECT_NEAR(r.records[i].lpips, synthetic_lpips().distance(edited, original), 1e-12);
        EXPECT_NEAR(r.records[i].clip_score, crop_clip_similarity(edited, d.masks[i], material, embedder).score, 1e-12);
        EXPECT_GT(r.records[i].lpips, 0.1);
    }
}

TEST(Dataset, MissingResultsSkippedAndCounted) {
    const Dataset d = make_dataset("ds_missing");
    const std::filesystem::path dir = d.root / "partial";
    std::filesystem::create_directories(dir);
    std::filesystem::copy_file(d.manifest.entries[0].object_image, dir / "pair0.png");
    const EvalReport r =
        evaluate_dataset(d.manifest, {{"partial", std::nullopt, dir}}, synthetic_lpips(), TextureStatsEmbedder());
    EXPECT_EQ(r.records.size(), 1u);
    ASSERT_EQ(r.skipped.size(), 1u);
    EXPECT_NE(r.skipped[0].find("pair1"), std::string::npos);
    EXPECT_EQ(summary_json(r)["skipped_count"], 1);
}

TEST(Dataset, DeterministicAndThreadIndependent) {
    const Dataset d = make_dataset("ds_det");
    std::vector<MethodResults> methods;
    for (const double lam : {0.5, 0.8}) {
        const auto dir = d.root / ("m" + std::to_string(static_cast<int>(lam * 10)));
        std::filesystem::create_directories(dir);
        for (std::size_t i = 0; i < 2; ++i)
            save_image(noise_image(128, 128, 90 + i + static_cast<std::uint64_t>(lam * 10)),
                       dir / (d.manifest.entries[i].id + ".png"));
        methods.push_back({"ours", lam, dir});
    }
    const TextureStatsEmbedder embedder;
    const EvalReport a = evaluate_dataset(d.manifest, methods, synthetic_lpips(), embedder);
    const EvalReport b = evaluate_dataset(d.manifest, methods, synthetic_lpips(), embedder, {{64, 128}, 0, 3});
    ASSERT_EQ(a.records.size(), 4u);
    ASSERT_EQ(b.records.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(a.records[i].entry, b.records[i].entry);
        EXPECT_EQ(a.records[i].clip_score, b.records[i].clip_score);
        EXPECT_EQ(a.records[i].lpips, b.records[i].lpips);
    }
    ASSERT_EQ(a.summaries.size(), 2u);
    EXPECT_EQ(a.summaries[1].lambda, 0.8);
}

TEST(Dataset, ReportFiles) {
    const Dataset d = make_dataset("ds_report");
    const auto dir = d.root / "identity";
    std::filesystem::create_directories(dir);
    for (const auto& e : d.manifest.entries)
        std::filesystem::copy_file(e.object_image, dir / (e.id + ".png"));
    EvalReport r = evaluate_dataset(d.manifest, {{"identity", std::nullopt, dir}, {"other", 0.5, d.root / "none"}},
                                    synthetic_lpips(), TextureStatsEmbedder());
    write_report(r, d.root / "report");
    std::ifstream csv(d.root / "report" / "report.csv");
    std::string header;
    std::getline(csv, header);
    EXPECT_EQ(header, "method,lambda,entry,clip_score,lpips");
    const json summary = json::parse(std::ifstream(d.root / "report" / "summary.json"));
    EXPECT_EQ(summary["embedder"], "texture-stats-v1");
    EXPECT_EQ(summary["embedder_is_clip"], false);
    EXPECT_EQ(summary["skipped_count"], 2);
    EXPECT_EQ(summary["methods"].size(), 2u);
    const json scatter = json::parse(std::ifstream(d.root / "report" / "scatter.json"));
    ASSERT_EQ(scatter["annotations"].size(), 3u);
    EXPECT_EQ(scatter["annotations"][0]["value"], 0.82);
    EXPECT_EQ(scatter["annotations"][1]["value"], 0.84);
    EXPECT_EQ(scatter["annotations"][2]["value"], 0.21);
    EXPECT_EQ(scatter["points"].size(), 1u);

    // Favourable zone: CLIP > 0.82 and LPIPS < 0.21.
    r.summaries = {{"a", 0.5, 3, 0.83, 0.2}, {"b", 0.8, 3, 0.85, 0.21}, {"c", 1.1, 3, 0.82, 0.1}, {"d", 1.5, 3, 0.9, 0.05}};
    EXPECT_EQ(r.favorable_points(), 2u);
}

TEST(Embedder, SelectionAndFallback) {
    const auto dir = fixtures::temp_dir("embedder_select");
    EXPECT_EQ(make_embedder("texture-stats")->name(), "texture-stats-v1");
    EXPECT_EQ(make_embedder("auto", dir)->name(), "texture-stats-v1");
    EXPECT_THROW(make_embedder("clip", dir), BackendError);
    EXPECT_THROW(make_embedder("resnet", dir), ValidationError);
}
