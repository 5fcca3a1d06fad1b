// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "matfuse/denoiser/denoiser.hpp"

namespace matfuse {

enum class BackendKind { Toy, Pretrained, Worker };

BackendKind parse_backend_kind(const std::string& name);
std::string to_string(BackendKind kind);

struct BackendSpec {
    BackendKind kind = BackendKind::Toy;
    std::uint64_t seed = 0;
    std::size_t image_size = kDefaultImageSize;
    /// Pretrained: falls back to MATFUSE_WEIGHTS_DIR.
    std::optional<std::filesystem::path> weights_dir;
    /// Worker: the command to spawn. Pretrained: overrides the diffusers worker command.
    std::vector<std::string> worker_command;
};

/// Expected layout under the weights directory:
///   stable-diffusion-v1-5/{unet,vae,text_encoder,tokenizer}/
///   ip-adapter/ip-adapter_sd15.safetensors (or .bin)
///   ip-adapter/image_encoder/
/// Throws BackendError naming the first missing component.
void check_pretrained_weights(const std::filesystem::path& weights_dir);

/// Default command for the diffusers worker: MATFUSE_SD_WORKER (split on spaces),
/// otherwise python3 with the bundled script.
std::vector<std::string> default_pretrained_worker_command();

/// Throws BackendError on any load failure.
std::unique_ptr<Denoiser> load_pretrained_backend(const BackendSpec& spec);

std::unique_ptr<Denoiser> make_backend(const BackendSpec& spec);

/// True for backends whose instances are cheap enough to create per worker thread.
bool backend_supports_parallel_instances(BackendKind kind);

}  // namespace matfuse
