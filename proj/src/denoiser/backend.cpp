// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "matfuse/denoiser/backend.hpp"

#include <cstdlib>
#include <sstream>

#include "matfuse/denoiser/remote.hpp"
#include "matfuse/denoiser/toy_backend.hpp"
#include "matfuse/errors.hpp"

#ifndef MATFUSE_SD_WORKER_SCRIPT
#define MATFUSE_SD_WORKER_SCRIPT "sd_worker.py"
#endif

namespace matfuse {

namespace fs = std::filesystem;

BackendKind parse_backend_kind(const std::string& name) {
    if (name == "toy")
        return BackendKind::Toy;
    if (name == "pretrained")
        return BackendKind::Pretrained;
    if (name == "worker")
        return BackendKind::Worker;
    throw ValidationError("backend", "expected toy, pretrained or worker, got '" + name + "'");
}

std::string to_string(BackendKind kind) {
    switch (kind) {
        case BackendKind::Toy:
            return "toy";
        case BackendKind::Pretrained:
            return "pretrained";
        case BackendKind::Worker:
            return "worker";
    }
    return "unknown";
}

void check_pretrained_weights(const fs::path& dir) {
    if (!fs::is_directory(dir))
        throw BackendError("weights", "weights directory not found: " + dir.string());
    const fs::path sd = dir / "stable-diffusion-v1-5";
    for (const char* part : {"unet", "vae", "text_encoder", "tokenizer"})
        if (!fs::is_directory(sd / part))
            throw BackendError(part, std::string("missing ") + part + " weights: " + (sd / part).string());
    const fs::path ip = dir / "ip-adapter";
    if (!fs::exists(ip / "ip-adapter_sd15.safetensors") && !fs::exists(ip / "ip-adapter_sd15.bin"))
        throw BackendError("ip_adapter", "image-prompt adapter unavailable: no ip-adapter_sd15 weights in " +
                                             ip.string());
    if (!fs::is_directory(ip / "image_encoder"))
        throw BackendError("ip_adapter", "image-prompt adapter unavailable: missing image encoder in " + ip.string());
}

std::vector<std::string> default_pretrained_worker_command() {
    if (const char* cmd = std::getenv("MATFUSE_SD_WORKER"); cmd && *cmd) {
        std::vector<std::string> argv;
        std::istringstream words(cmd);
        for (std::string w; words >> w;)
            argv.push_back(w);
        return argv;
    }
    return {"python3", MATFUSE_SD_WORKER_SCRIPT};
}

std::unique_ptr<Denoiser> load_pretrained_backend(const BackendSpec& spec) {
    fs::path dir;
    if (spec.weights_dir) {
        dir = *spec.weights_dir;
    } else if (const char* env = std::getenv("MATFUSE_WEIGHTS_DIR"); env && *env) {
        dir = env;
    } else {
        throw BackendError("weights", "MATFUSE_WEIGHTS_DIR is not set and no weights directory was given");
    }
    check_pretrained_weights(dir);
    std::vector<std::string> argv = spec.worker_command.empty() ? default_pretrained_worker_command()
                                                                : spec.worker_command;
    argv.insert(argv.end(), {"--weights", dir.string(), "--size", std::to_string(spec.image_size)});
    return std::make_unique<RemoteDenoiser>(std::make_unique<WorkerProcess>(argv));
}

std::unique_ptr<Denoiser> make_backend(const BackendSpec& spec) {
    switch (spec.kind) {
        case BackendKind::Toy:
            return make_toy_backend(spec.seed, {spec.image_size, spec.image_size, std::nullopt});
        case BackendKind::Pretrained:
            return load_pretrained_backend(spec);
        case BackendKind::Worker:
            if (spec.worker_command.empty())
                throw BackendError("worker", "no worker command given");
            return std::make_unique<RemoteDenoiser>(std::make_unique<WorkerProcess>(spec.worker_command));
    }
    throw BackendError("backend", "unknown backend kind");
}

bool backend_supports_parallel_instances(BackendKind kind) { return kind == BackendKind::Toy; }

}  // namespace matfuse
