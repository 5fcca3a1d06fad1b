// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "matfuse/denoiser/remote.hpp"
#include "matfuse/eval/similarity.hpp"

namespace matfuse::eval {

/// Projected CLIP image embeddings from a worker in clip-only mode
/// (ops clip_info and clip_embed). Calls are serialized, so one instance can
/// be shared by the evaluation threads.
class WorkerClipEmbedder final : public ImageEmbedder {
public:
    explicit WorkerClipEmbedder(std::unique_ptr<WorkerProcess> process);

    std::string name() const override { return m_name; }
    std::size_t dim() const { return m_dim; }
    std::vector<double> embed(const ImageRGB& image) const override;

private:
    std::unique_ptr<WorkerProcess> m_process;
    mutable std::mutex m_mutex;
    std::string m_name;
    std::size_t m_dim = 0;
};

/// Clip-only worker over <weights_dir>/ip-adapter/image_encoder.
/// Throws BackendError("clip", ...) when the encoder is missing or fails to start.
std::unique_ptr<ImageEmbedder> load_clip_embedder(const std::filesystem::path& weights_dir);

/// CLIP when `weights_dir` (or MATFUSE_WEIGHTS_DIR) holds an image encoder, else the texture-stats fallback.
std::unique_ptr<ImageEmbedder> make_embedder(const std::string& kind,
                                             const std::optional<std::filesystem::path>& weights_dir = std::nullopt);

}  // namespace matfuse::eval
