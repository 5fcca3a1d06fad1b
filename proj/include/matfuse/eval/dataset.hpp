// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "matfuse/eval/lpips.hpp"
#include "matfuse/eval/similarity.hpp"

namespace matfuse::eval {

struct DatasetEntry {
    std::string id;
    std::filesystem::path object_image;
    std::filesystem::path mask;
    std::filesystem::path material_image;
    std::string y_src;
    std::string y_trg;
};

struct DatasetManifest {
    std::vector<DatasetEntry> entries;
    std::size_t object_count() const;
    std::size_t material_count() const;
};

/// JSON lines with object_image, mask, material_image, y_src, y_trg and an
/// optional id (default "entry_NNN"). Paths resolve against the manifest's
/// directory. Every file must exist and every mask must be nonempty.
DatasetManifest load_manifest(const std::filesystem::path& path);

/// One result directory holding <entry id>.png per entry.
struct MethodResults {
    std::string method;
    std::optional<double> lambda;
    std::filesystem::path dir;

    std::string label() const;
};

/// Parses "method=dir" or "method@lambda=dir".
MethodResults parse_method_results(const std::string& spec);

struct EvalRecord {
    std::string method;
    std::optional<double> lambda;
    std::string entry;
    double clip_score = 0.0;
    double lpips = 0.0;
};

struct MethodSummary {
    std::string method;
    std::optional<double> lambda;
    std::size_t entries = 0;
    double clip_score = 0.0;
    double lpips = 0.0;
};

struct ZoneBounds {
    double clip_low = 0.82;
    double clip_high = 0.84;
    double lpips = 0.21;

    bool favorable(double clip, double lp) const { return clip > clip_low && lp < lpips; }
};

struct EvalReport {
    std::vector<EvalRecord> records;
    std::vector<MethodSummary> summaries;  // input order of the method list
    std::vector<std::string> skipped;      // "label/entry: reason"
    std::size_t resized = 0;               // results resampled to the original's size
    std::string embedder;
    std::string lpips_weights;
    ZoneBounds zones;

    std::size_t favorable_points() const;
    std::size_t favorable_records() const;
};

struct EvalOptions {
    std::vector<std::size_t> crop_sizes = kDefaultCropSizes;
    std::size_t stride = 0;
    std::size_t threads = 1;
};

/// LPIPS(result, original object) and crop similarity(result in mask, material)
/// per entry and method. Missing result images are skipped and listed.
EvalReport evaluate_dataset(const DatasetManifest& manifest, const std::vector<MethodResults>& methods,
                            const Lpips& lpips, const ImageEmbedder& embedder, const EvalOptions& options = {});

/// report.csv, summary.json, scatter.csv, scatter.json.
void write_report(const EvalReport& report, const std::filesystem::path& dir);

nlohmann::json summary_json(const EvalReport& report);

}  // namespace matfuse::eval
