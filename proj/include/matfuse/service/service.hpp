// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "matfuse/denoiser/backend.hpp"
#include "matfuse/errors.hpp"
#include "matfuse/pipeline/artifacts.hpp"
#include "matfuse/service/jobs.hpp"

namespace httplib {
class Server;
}

namespace matfuse::service {

struct FieldError {
    std::string field;
    std::string message;
};

/// Several field failures from one submission.
class SubmissionError : public ValidationError {
public:
    explicit SubmissionError(std::vector<FieldError> errors);
    const std::vector<FieldError>& errors() const { return m_errors; }

private:
    std::vector<FieldError> m_errors;
};

/// Raw submission: encoded image bytes plus text fields.
struct Submission {
    std::optional<std::string> image;
    std::optional<std::string> mask;
    std::optional<std::string> material;
    std::string source_prompt;
    std::string target_prompt;
    std::string config_json;              // object, may be empty
    std::optional<std::vector<double>> lambdas;  // one job per value when set
};

struct ServiceOptions {
    std::filesystem::path data_dir;
    BackendSpec backend;
    /// 0 selects 1 for pretrained backends and the hardware thread count otherwise.
    std::size_t workers = 0;
    int preview_every = 10;
    std::size_t tail_length = 5;
    /// Defaults to <data_dir>/cache.
    std::optional<std::filesystem::path> cache_dir;
};

class Service {
public:
    /// `factory` overrides backend construction (one instance per worker).
    Service(ServiceOptions options, BackendFactory factory = {});
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Validates and queues; returns one id per job.
    std::vector<std::string> submit(const Submission& submission);

    JobStore& jobs() { return *m_store; }
    const BackendManifest& manifest() const { return m_manifest; }
    std::size_t worker_count() const { return m_workers.size(); }
    const ServiceOptions& options() const { return m_options; }

    /// Stops the workers. Running and queued jobs end as failed/"interrupted".
    void shutdown();

    void register_routes(httplib::Server& server);

private:
    std::string store_upload(const std::string& bytes);
    std::string read_upload(const std::string& sha) const;
    void worker_loop(Denoiser& backend);
    void run_job(const std::string& id, Denoiser& backend);

    ServiceOptions m_options;
    std::unique_ptr<JobStore> m_store;
    std::unique_ptr<TrajectoryCache> m_cache;
    std::vector<std::unique_ptr<Denoiser>> m_backends;
    std::vector<std::thread> m_workers;
    BackendManifest m_manifest;
    std::atomic<bool> m_stopping{false};
};

std::size_t default_worker_count(BackendKind kind);

}  // namespace matfuse::service
