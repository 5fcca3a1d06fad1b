// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "matfuse/denoiser/denoiser.hpp"

namespace matfuse {

/// Child process connected through a socket pair on its stdin and stdout.
/// Stderr is inherited.
class WorkerProcess {
public:
    WorkerProcess(const std::vector<std::string>& argv, const std::map<std::string, std::string>& env = {});
    ~WorkerProcess();
    WorkerProcess(const WorkerProcess&) = delete;
    WorkerProcess& operator=(const WorkerProcess&) = delete;

    /// One JSON object per line in each direction. Throws BackendError when the worker is gone.
    nlohmann::json call(const nlohmann::json& request);

    int pid() const { return m_pid; }

private:
    void write_line(const std::string& line);
    std::string read_line();
    std::string exit_description();

    int m_pid = -1;
    int m_fd = -1;
    std::string m_buffer;
    std::string m_program;
};

/// Denoiser served by an external worker speaking the line protocol of
/// `serve_denoiser`. Requests: manifest, predict, pullback (two round trips:
/// the worker returns internals, the client answers with their cotangent),
/// embed, encode, decode, shutdown.
class RemoteDenoiser final : public Denoiser {
public:
    explicit RemoteDenoiser(std::unique_ptr<WorkerProcess> process);
    ~RemoteDenoiser() override;

    const BackendManifest& manifest() const override { return m_manifest; }

protected:
    NoisePrediction do_predict_noise(const Tensor& latent, int timestep, const Conditioning& cond,
                                     bool record_internals) override;
    InternalsPullback do_internals_pullback(const Tensor& latent, int timestep, const Conditioning& cond,
                                            const CotangentFn& cotangent) override;
    MaterialEmbedding do_embed_material(const ImageRGB& image) override;
    Tensor do_encode(const ImageRGB& image) override;
    ImageRGB do_decode(const Tensor& latent) override;

private:
    nlohmann::json call(const nlohmann::json& request);

    std::unique_ptr<WorkerProcess> m_process;
    BackendManifest m_manifest;
};

/// Answers protocol requests from `in` on `out` until EOF or a shutdown request.
void serve_denoiser(Denoiser& backend, std::istream& in, std::ostream& out);

}  // namespace matfuse
