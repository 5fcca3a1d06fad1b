// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "matfuse/eval/dataset.hpp"

#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "matfuse/core/image_io.hpp"
#include "matfuse/core/mask.hpp"
#include "matfuse/errors.hpp"

namespace matfuse::eval {

namespace fs = std::filesystem;
using nlohmann::json;

std::size_t DatasetManifest::object_count() const {
    std::set<fs::path> s;
    for (const auto& e : entries)
        s.insert(e.object_image);
    return s.size();
}

std::size_t DatasetManifest::material_count() const {
    std::set<fs::path> s;
    for (const auto& e : entries)
        s.insert(e.material_image);
    return s.size();
}

DatasetManifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open manifest " + path.string());
    const fs::path base = path.parent_path();
    DatasetManifest manifest;
    std::set<std::string> ids;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        const std::size_t idx = manifest.entries.size();
        const std::string where = fmt::format("entries[{}]", idx);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ValidationError(where, fmt::format("line {} is not JSON: {}", lineno, e.what()));
        }
        if (!j.is_object())
            throw ValidationError(where, "expected an object");
        const auto str = [&](const char* key, bool required) -> std::string {
            if (!j.contains(key)) {
                if (required)
                    throw ValidationError(where + "." + key, "missing");
                return {};
            }
            if (!j[key].is_string())
                throw ValidationError(where + "." + key, "must be a string");
            return j[key].get<std::string>();
        };
        const auto file = [&](const char* key) {
            fs::path p = str(key, true);
            if (p.is_relative())
                p = base / p;
            if (!fs::exists(p))
                throw ValidationError(where + "." + key, "file not found: " + p.string());
            return p;
        };
        DatasetEntry e;
        e.id = str("id", false);
        if (e.id.empty())
            e.id = fmt::format("entry_{:03}", idx);
        if (!ids.insert(e.id).second)
            throw ValidationError(where + ".id", "duplicate id " + e.id);
        e.object_image = file("object_image");
        e.mask = file("mask");
        e.material_image = file("material_image");
        e.y_src = str("y_src", true);
        e.y_trg = str("y_trg", false);
        try {
            require_nonempty(load_mask(e.mask));
        } catch (const ValidationError& err) {
            throw ValidationError(where + ".mask", err.what());
        }
        manifest.entries.push_back(std::move(e));
    }
    if (manifest.entries.empty())
        throw ValidationError("entries", "manifest has no entries");
    return manifest;
}

std::string MethodResults::label() const {
    return lambda ? fmt::format("{}@{:g}", method, *lambda) : method;
}

MethodResults parse_method_results(const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size())
        throw ValidationError("results", "expected method[@lambda]=dir, got '" + spec + "'");
    MethodResults r;
    r.dir = spec.substr(eq + 1);
    std::string head = spec.substr(0, eq);
    if (const auto at = head.find('@'); at != std::string::npos) {
        const std::string lam = head.substr(at + 1);
        try {
            std::size_t used = 0;
            r.lambda = std::stod(lam, &used);
            if (used != lam.size())
                throw std::invalid_argument(lam);
        } catch (const std::exception&) {
            throw ValidationError("results", "bad lambda '" + lam + "' in '" + spec + "'");
        }
        head.resize(at);
    }
    if (head.empty())
        throw ValidationError("results", "empty method name in '" + spec + "'");
    r.method = head;
    return r;
}

std::size_t EvalReport::favorable_points() const {
    std::size_t n = 0;
    for (const auto& s : summaries)
        n += s.entries > 0 && zones.favorable(s.clip_score, s.lpips);
    return n;
}

std::size_t EvalReport::favorable_records() const {
    std::size_t n = 0;
    for (const auto& r : records)
        n += zones.favorable(r.clip_score, r.lpips);
    return n;
}

EvalReport evaluate_dataset(const DatasetManifest& manifest, const std::vector<MethodResults>& methods,
                            const Lpips& lpips, const ImageEmbedder& embedder, const EvalOptions& options) {
    if (methods.empty())
        throw ValidationError("results", "at least one results directory is required");
    EvalReport report;
    report.embedder = embedder.name();
    report.lpips_weights = lpips.source();

    struct Task {
        std::size_t method;
        std::size_t entry;
    };
    std::vector<Task> tasks;
    for (std::size_t m = 0; m < methods.size(); ++m)
        for (std::size_t e = 0; e < manifest.entries.size(); ++e)
            tasks.push_back({m, e});

    struct Outcome {
        std::optional<EvalRecord> record;
        std::string skipped;
        bool resized = false;
    };
    std::vector<Outcome> outcomes(tasks.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    const auto run = [&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++) {
            const MethodResults& mr = methods[tasks[i].method];
            const DatasetEntry& entry = manifest.entries[tasks[i].entry];
            Outcome& out = outcomes[i];
            try {
                const fs::path result = mr.dir / (entry.id + ".png");
                if (!fs::exists(result)) {
                    out.skipped = fmt::format("{}/{}: missing {}", mr.label(), entry.id, result.string());
                    continue;
                }
                const ImageRGB original = load_image(entry.object_image);
                const BinaryMask mask = load_mask(entry.mask, GridSize{original.height(), original.width()});
                ImageRGB edited = load_image(result);
                if (edited.height() != original.height() || edited.width() != original.width()) {
                    edited = resize_image(edited, {original.height(), original.width()});
                    out.resized = true;
                }
                const ImageRGB material = load_image(entry.material_image);
                EvalRecord rec{mr.method, mr.lambda, entry.id, 0.0, 0.0};
                rec.lpips = lpips.distance(edited, original);
                rec.clip_score =
                    crop_clip_similarity(edited, mask, material, embedder, options.crop_sizes, options.stride).score;
                out.record = rec;
            } catch (const ValidationError& e) {
                out.skipped = fmt::format("{}/{}: {}", mr.label(), entry.id, e.what());
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure)
                    failure = std::current_exception();
                next = tasks.size();
            }
        }
    };
    const std::size_t threads = std::clamp<std::size_t>(options.threads, 1, std::max<std::size_t>(tasks.size(), 1));
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < threads; ++t)
        pool.emplace_back(run);
    run();
    for (auto& t : pool)
        t.join();
    if (failure)
        std::rethrow_exception(failure);

    for (std::size_t m = 0; m < methods.size(); ++m)
        report.summaries.push_back({methods[m].method, methods[m].lambda, 0, 0.0, 0.0});
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        Outcome& o = outcomes[i];
        report.resized += o.resized;
        if (!o.record) {
            spdlog::warn("skipped {}", o.skipped);
            report.skipped.push_back(std::move(o.skipped));
            continue;
        }
        MethodSummary& s = report.summaries[tasks[i].method];
        ++s.entries;
        s.clip_score += o.record->clip_score;
        s.lpips += o.record->lpips;
        report.records.push_back(std::move(*o.record));
    }
    for (auto& s : report.summaries)
        if (s.entries > 0) {
            s.clip_score /= static_cast<double>(s.entries);
            s.lpips /= static_cast<double>(s.entries);
        }
    return report;
}

namespace {

std::string lambda_text(const std::optional<double>& lambda) { return lambda ? fmt::format("{:g}", *lambda) : ""; }

json lambda_json(const std::optional<double>& lambda) { return lambda ? json(*lambda) : json(nullptr); }

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot write " + path.string());
    out << text;
}

}  // namespace

json summary_json(const EvalReport& report) {
    json methods = json::array();
    for (const auto& s : report.summaries)
        methods.push_back({{"method", s.method},
                           {"lambda", lambda_json(s.lambda)},
                           {"entries", s.entries},
                           {"clip_score", s.entries ? json(s.clip_score) : json(nullptr)},
                           {"lpips", s.entries ? json(s.lpips) : json(nullptr)},
                           {"favorable", s.entries > 0 && report.zones.favorable(s.clip_score, s.lpips)}});
    return {{"embedder", report.embedder},
            {"embedder_is_clip", false},
            {"lpips_weights", report.lpips_weights},
            {"records", report.records.size()},
            {"skipped", report.skipped},
            {"skipped_count", report.skipped.size()},
            {"resized_results", report.resized},
            {"zones", {{"clip_low", report.zones.clip_low},
                       {"clip_high", report.zones.clip_high},
                       {"lpips", report.zones.lpips}}},
            {"favorable_points", report.favorable_points()},
            {"favorable_records", report.favorable_records()},
            {"methods", methods}};
}

void write_report(const EvalReport& report, const fs::path& dir) {
    fs::create_directories(dir);
    std::string csv = "method,lambda,entry,clip_score,lpips\n";
    for (const auto& r : report.records)
        csv += fmt::format("{},{},{},{:.10g},{:.10g}\n", r.method, lambda_text(r.lambda), r.entry, r.clip_score,
                           r.lpips);
    write_text(dir / "report.csv", csv);

    json summary = summary_json(report);
    if (report.embedder.rfind("clip", 0) == 0)
        summary["embedder_is_clip"] = true;
    write_text(dir / "summary.json", summary.dump(2) + "\n");

    std::string scatter = "method,lambda,clip_score,lpips,entries,favorable\n";
    json points = json::array();
    for (const auto& s : report.summaries) {
        if (s.entries == 0)
            continue;
        const bool fav = report.zones.favorable(s.clip_score, s.lpips);
        scatter += fmt::format("{},{},{:.10g},{:.10g},{},{}\n", s.method, lambda_text(s.lambda), s.clip_score,
                               s.lpips, s.entries, fav ? 1 : 0);
        points.push_back({{"method", s.method},
                          {"lambda", lambda_json(s.lambda)},
                          {"clip_score", s.clip_score},
                          {"lpips", s.lpips},
                          {"favorable", fav}});
    }
    write_text(dir / "scatter.csv", scatter);
    const json annotations = json::array({
        {{"axis", "clip_score"}, {"value", report.zones.clip_low}, {"label", "low material similarity"}},
        {{"axis", "clip_score"}, {"value", report.zones.clip_high}, {"label", "high material similarity"}},
        {{"axis", "lpips"}, {"value", report.zones.lpips}, {"label", "detail loss"}},
    });
    const json scatter_json = {{"x", "clip_score"},
                               {"y", "lpips"},
                               {"embedder", report.embedder},
                               {"points", points},
                               {"annotations", annotations},
                               {"favorable_zone", {{"clip_gt", report.zones.clip_low}, {"lpips_lt", report.zones.lpips}}},
                               {"favorable_points", report.favorable_points()}};
    write_text(dir / "scatter.json", scatter_json.dump(2) + "\n");
}

}  // namespace matfuse::eval
