// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "matfuse/pipeline/transfer.hpp"

namespace matfuse {

/// Writes to a sibling temp file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

/// SHA-256 over the image pixels, source prompt, step count, schedule and backend manifest.
std::string trajectory_cache_key(const ImageRGB& image, const std::string& source_prompt, int steps,
                                 const BackendManifest& manifest);

/// MATFUSE_CACHE_DIR, else $XDG_CACHE_HOME/matfuse, else ~/.cache/matfuse.
std::filesystem::path default_cache_dir();

/// Content-addressed inversion trajectories under <root>/trajectories/<key>/.
class TrajectoryCache {
public:
    explicit TrajectoryCache(std::filesystem::path root);

    const std::filesystem::path& root() const { return m_root; }
    std::filesystem::path entry_dir(const std::string& key) const;

    /// Unreadable entries are reported as misses.
    std::optional<InversionTrajectory> load(const std::string& key) const;
    void store(const std::string& key, const InversionTrajectory& trajectory, int steps,
               const nlohmann::json& extra) const;

    /// Cached trajectory for the request, inverting and storing it on a miss.
    InversionTrajectory obtain(const TransferRequest& request, Denoiser& backend, bool* hit = nullptr) const;

private:
    std::filesystem::path m_root;
};

/// Output layout of one transfer:
///   inputs/{image,mask,material}.png, inputs/request.json
///   trajectory/           inversion trajectory
///   steps.csv             per-step guidance log, appended as steps finish
///   previews/step_NNN.png
///   result.png, manifest.json
class RunDirectory {
public:
    /// Refuses a non-empty existing directory unless `force`, which clears it first.
    /// The refusal is a ValidationError on field "out".
    static RunDirectory create(const std::filesystem::path& dir, bool force);

    const std::filesystem::path& root() const { return m_root; }
    std::filesystem::path result_path() const { return m_root / "result.png"; }
    std::filesystem::path steps_path() const { return m_root / "steps.csv"; }
    std::filesystem::path preview_path(int step) const;

    void write_inputs(const TransferRequest& request) const;
    void write_trajectory(const InversionTrajectory& trajectory, int steps) const;
    void append_step(const StepRecord& record);
    /// Returns the published path.
    std::filesystem::path write_preview(int step, const ImageRGB& preview) const;
    void write_result(const TransferResult& result, const nlohmann::json& extra = nlohmann::json::object()) const;

private:
    explicit RunDirectory(std::filesystem::path root) : m_root(std::move(root)) {}

    std::filesystem::path m_root;
    std::shared_ptr<std::ofstream> m_steps;
    std::shared_ptr<std::mutex> m_steps_mutex = std::make_shared<std::mutex>();
};

struct RunOptions {
    const TrajectoryCache* cache = nullptr;
    bool write_previews = true;
    nlohmann::json extra = nlohmann::json::object();  // merged into manifest.json
};

/// material_transfer with every artifact written into `run`. steps.csv is
/// flushed per step, so a cancelled or failed run keeps its log.
TransferResult run_transfer(const TransferRequest& request, Denoiser& backend, RunDirectory& run,
                            const RunOptions& options = {}, TransferHooks hooks = {});

}  // namespace matfuse
