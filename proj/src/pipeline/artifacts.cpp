// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "matfuse/pipeline/artifacts.hpp"

#include <atomic>
#include <cstdlib>

#include <fmt/format.h>
#include <spdlog/spdlog.h>
#include <unistd.h>

#include "matfuse/core/hash.hpp"
#include "matfuse/core/image_io.hpp"
#include "matfuse/errors.hpp"

namespace matfuse {

namespace fs = std::filesystem;
using nlohmann::json;

void write_file_atomic(const fs::path& path, std::string_view bytes) {
    static std::atomic<unsigned> counter{0};
    const fs::path tmp = path.parent_path() / fmt::format(".{}.tmp.{}.{}", path.filename().string(), ::getpid(),
                                                          counter++);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw IoError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out)
            throw IoError("short write to " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw IoError("cannot publish " + path.string() + ": " + ec.message());
    }
}

std::string trajectory_cache_key(const ImageRGB& image, const std::string& source_prompt, int steps,
                                 const BackendManifest& manifest) {
    Sha256 h;
    h.update(fmt::format("matfuse-trajectory-v1\n{}x{}\n", image.height(), image.width()));
    h.update(image.pixels().data(), image.pixels().size() * sizeof(double));
    h.update(fmt::format("\n{}\n{}\n", source_prompt.size(), source_prompt));
    h.update(NoiseSchedule(steps).metadata().dump());
    h.update(to_json(manifest).dump());
    return h.hex_digest();
}

fs::path default_cache_dir() {
    if (const char* c = std::getenv("MATFUSE_CACHE_DIR"); c && *c)
        return c;
    if (const char* x = std::getenv("XDG_CACHE_HOME"); x && *x)
        return fs::path(x) / "matfuse";
    if (const char* home = std::getenv("HOME"); home && *home)
        return fs::path(home) / ".cache" / "matfuse";
    return fs::temp_directory_path() / "matfuse-cache";
}

TrajectoryCache::TrajectoryCache(fs::path root) : m_root(std::move(root)) {}

fs::path TrajectoryCache::entry_dir(const std::string& key) const { return m_root / "trajectories" / key; }

std::optional<InversionTrajectory> TrajectoryCache::load(const std::string& key) const {
    const fs::path dir = entry_dir(key);
    if (!fs::exists(dir / "trajectory.json"))
        return std::nullopt;
    try {
        return load_trajectory(dir);
    } catch (const Error& e) {
        spdlog::warn("ignoring unreadable cached trajectory {}: {}", dir.string(), e.what());
        return std::nullopt;
    }
}

void TrajectoryCache::store(const std::string& key, const InversionTrajectory& trajectory, int steps,
                            const json& extra) const {
    const fs::path dir = entry_dir(key);
    fs::create_directories(dir.parent_path());
    const fs::path tmp = dir.parent_path() / fmt::format(".{}.{}", key, ::getpid());
    fs::remove_all(tmp);
    json meta = extra;
    meta["cache_key"] = key;
    save_trajectory(trajectory, NoiseSchedule(steps), meta, tmp);
    std::error_code ec;
    fs::remove_all(dir, ec);
    fs::rename(tmp, dir, ec);
    if (ec) {
        // Another writer published the same key first.
        fs::remove_all(tmp);
    }
}

InversionTrajectory TrajectoryCache::obtain(const TransferRequest& request, Denoiser& backend, bool* hit) const {
    const std::string key =
        trajectory_cache_key(request.x_init, request.prompts.source, request.config.T, backend.manifest());
    if (auto cached = load(key); cached && cached->steps() == request.config.T &&
                                 cached->source_prompt == request.prompts.source) {
        if (hit)
            *hit = true;
        return std::move(*cached);
    }
    if (hit)
        *hit = false;
    InversionTrajectory traj = invert_request(request, backend);
    try {
        store(key, traj, request.config.T, {{"backend", backend.manifest().name}});
    } catch (const std::exception& e) {
        spdlog::warn("could not cache trajectory: {}", e.what());
    }
    return traj;
}

RunDirectory RunDirectory::create(const fs::path& dir, bool force) {
    if (fs::exists(dir)) {
        if (!fs::is_directory(dir))
            throw ValidationError("out", dir.string() + " exists and is not a directory");
        if (!fs::is_empty(dir)) {
            if (!force)
                throw ValidationError("out", dir.string() + " is not empty; pass --force to overwrite");
            for (const auto& entry : fs::directory_iterator(dir))
                fs::remove_all(entry.path());
        }
    }
    fs::create_directories(dir / "previews");
    return RunDirectory(dir);
}

fs::path RunDirectory::preview_path(int step) const {
    return m_root / "previews" / fmt::format("step_{:03}.png", step);
}

void RunDirectory::write_inputs(const TransferRequest& request) const {
    const fs::path in = m_root / "inputs";
    fs::create_directories(in);
    const std::string image = encode_png(request.x_init), mask = encode_png(request.object_mask),
                      material = encode_png(request.y_im);
    write_file_atomic(in / "image.png", image);
    write_file_atomic(in / "mask.png", mask);
    write_file_atomic(in / "material.png", material);
    const json doc = {{"prompts", {{"source", request.prompts.source}, {"target", request.prompts.target}}},
                      {"config", to_json(request.config)},
                      {"sha256",
                       {{"image", sha256_hex(image)}, {"mask", sha256_hex(mask)}, {"material", sha256_hex(material)}}}};
    write_file_atomic(in / "request.json", doc.dump(2) + "\n");
}

void RunDirectory::write_trajectory(const InversionTrajectory& trajectory, int steps) const {
    const fs::path dir = m_root / "trajectory";
    fs::remove_all(dir);
    save_trajectory(trajectory, NoiseSchedule(steps), json::object(), dir);
}

void RunDirectory::append_step(const StepRecord& record) {
    std::lock_guard lock(*m_steps_mutex);
    if (!m_steps) {
        m_steps = std::make_shared<std::ofstream>(steps_path(), std::ios::trunc);
        if (!*m_steps)
            throw IoError("cannot write " + steps_path().string());
        *m_steps << step_log_header() << '\n';
    }
    *m_steps << to_csv_line(record) << '\n';
    m_steps->flush();
}

fs::path RunDirectory::write_preview(int step, const ImageRGB& preview) const {
    const fs::path path = preview_path(step);
    write_file_atomic(path, encode_png(preview));
    return path;
}

void RunDirectory::write_result(const TransferResult& result, const json& extra) const {
    write_file_atomic(result_path(), encode_png(result.x_edit));
    json doc = {{"config", to_json(result.config)},
                {"backend", result.backend_manifest},
                {"schedule", NoiseSchedule(result.config.T).metadata()},
                {"steps", result.steps.size()},
                {"result", "result.png"},
                {"steps_log", "steps.csv"}};
    std::size_t passes = 0;
    for (const auto& s : result.steps)
        passes += s.passes;
    doc["sampling_passes"] = passes;
    for (const auto& [k, v] : extra.items())
        doc[k] = v;
    write_file_atomic(m_root / "manifest.json", doc.dump(2) + "\n");
}

TransferResult run_transfer(const TransferRequest& request, Denoiser& backend, RunDirectory& run,
                            const RunOptions& options, TransferHooks hooks) {
    request.validate();
    run.write_inputs(request);
    if (hooks.on_phase)
        hooks.on_phase(TransferPhase::Inverting);
    bool hit = false;
    const InversionTrajectory traj =
        options.cache ? options.cache->obtain(request, backend, &hit) : invert_request(request, backend);
    run.write_trajectory(traj, request.config.T);

    auto user_step = hooks.on_step;
    hooks.on_step = [&run, user_step](const StepRecord& r) {
        run.append_step(r);
        if (user_step)
            user_step(r);
    };
    if (options.write_previews) {
        auto user_preview = hooks.on_preview;
        hooks.on_preview = [&run, user_preview](int step, const ImageRGB& img) {
            run.write_preview(step, img);
            if (user_preview)
                user_preview(step, img);
        };
    }
    TransferResult result = material_transfer(request, backend, traj, hooks);
    json extra = options.extra;
    extra["trajectory_cache_hit"] = hit;
    extra["prompts"] = {{"source", request.prompts.source}, {"target", request.prompts.target}};
    run.write_result(result, extra);
    return result;
}

}  // namespace matfuse
