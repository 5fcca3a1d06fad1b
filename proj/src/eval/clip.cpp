// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "matfuse/eval/clip.hpp"

#include <cstdlib>

#include <spdlog/spdlog.h>

#include "matfuse/denoiser/backend.hpp"
#include "matfuse/denoiser/wire.hpp"
#include "matfuse/errors.hpp"

namespace matfuse::eval {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json checked(WorkerProcess& process, const json& request) {
    json reply = process.call(request);
    if (!reply.value("ok", false))
        wire::throw_reply(reply);
    return reply;
}

std::optional<fs::path> weights_from_env() {
    if (const char* env = std::getenv("MATFUSE_WEIGHTS_DIR"); env && *env)
        return fs::path(env);
    return std::nullopt;
}

}  // namespace

WorkerClipEmbedder::WorkerClipEmbedder(std::unique_ptr<WorkerProcess> process) : m_process(std::move(process)) {
    const json info = checked(*m_process, {{"op", "clip_info"}});
    m_name = info.at("name").get<std::string>();
    m_dim = info.at("dim").get<std::size_t>();
    if (m_name.rfind("clip", 0) != 0)
        m_name = "clip-" + m_name;
}

std::vector<double> WorkerClipEmbedder::embed(const ImageRGB& image) const {
    std::lock_guard lock(m_mutex);
    const Tensor e = wire::decode_tensor(checked(*m_process, {{"op", "clip_embed"}, {"image", wire::encode(image)}}).at("embedding"));
    if (e.size() != m_dim)
        throw BackendError("clip", "embedding has " + std::to_string(e.size()) + " values, expected " +
                                       std::to_string(m_dim));
    return {e.data(), e.data() + e.size()};
}

std::unique_ptr<ImageEmbedder> load_clip_embedder(const fs::path& weights_dir) {
    const fs::path encoder = weights_dir / "ip-adapter" / "image_encoder";
    if (!fs::is_directory(encoder))
        throw BackendError("clip", "image encoder not found at " + encoder.string());
    std::vector<std::string> argv = default_pretrained_worker_command();
    argv.insert(argv.end(), {"--clip-only", "--weights", weights_dir.string()});
    try {
        return std::make_unique<WorkerClipEmbedder>(std::make_unique<WorkerProcess>(argv));
    } catch (const BackendError& e) {
        throw BackendError("clip", std::string("clip worker failed: ") + e.what());
    }
}

std::unique_ptr<ImageEmbedder> make_embedder(const std::string& kind, const std::optional<fs::path>& weights_dir) {
    const std::optional<fs::path> dir = weights_dir ? weights_dir : weights_from_env();
    if (kind == "texture-stats")
        return std::make_unique<TextureStatsEmbedder>();
    if (kind == "clip") {
        if (!dir)
            throw BackendError("clip", "no weights directory: pass one or set MATFUSE_WEIGHTS_DIR");
        return load_clip_embedder(*dir);
    }
    if (kind == "auto") {
        if (dir && fs::is_directory(*dir / "ip-adapter" / "image_encoder"))
            return load_clip_embedder(*dir);
        spdlog::warn("no CLIP image encoder available; using the {} fallback embedder",
                     TextureStatsEmbedder().name());
        return std::make_unique<TextureStatsEmbedder>();
    }
    throw ValidationError("embedder", "unknown embedder '" + kind + "' (auto, clip, texture-stats)");
}

}  // namespace matfuse::eval
