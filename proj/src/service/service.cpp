// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "matfuse/service/service.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "matfuse/core/hash.hpp"
#include "matfuse/core/image_io.hpp"
#include "matfuse/core/mask.hpp"
#include "matfuse/errors.hpp"

namespace matfuse::service {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string join_errors(const std::vector<FieldError>& errors) {
    std::string out;
    for (const auto& e : errors)
        out += (out.empty() ? "" : "; ") + e.field + ": " + e.message;
    return out;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot read " + path.string());
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

SubmissionError::SubmissionError(std::vector<FieldError> errors)
    : ValidationError(errors.empty() ? std::string() : errors.front().field, join_errors(errors)),
      m_errors(std::move(errors)) {}

std::size_t default_worker_count(BackendKind kind) {
    if (!backend_supports_parallel_instances(kind))
        return 1;
    return std::max(1u, std::thread::hardware_concurrency());
}

Service::Service(ServiceOptions options, BackendFactory factory) : m_options(std::move(options)) {
    if (m_options.preview_every < 1)
        throw ValidationError("preview_every", "must be >= 1");
    if (!factory) {
        const BackendSpec spec = m_options.backend;
        factory = [spec] { return make_backend(spec); };
    }
    const std::size_t n = m_options.workers ? m_options.workers : default_worker_count(m_options.backend.kind);
    for (std::size_t i = 0; i < n; ++i)
        m_backends.push_back(factory());
    m_manifest = m_backends.front()->manifest();

    fs::create_directories(m_options.data_dir / "uploads");
    fs::create_directories(m_options.data_dir / "jobs");
    m_store = std::make_unique<JobStore>(m_options.data_dir, m_options.tail_length);
    m_cache = std::make_unique<TrajectoryCache>(m_options.cache_dir.value_or(m_options.data_dir / "cache"));
    for (auto& backend : m_backends)
        m_workers.emplace_back([this, b = backend.get()] { worker_loop(*b); });
    spdlog::info("service ready: backend {}, {} worker(s), data in {}", m_manifest.name, n,
                 m_options.data_dir.string());
}

Service::~Service() { shutdown(); }

void Service::shutdown() {
    if (m_stopping.exchange(true))
        return;
    m_store->stop();
    for (auto& t : m_workers)
        if (t.joinable())
            t.join();
    for (const auto& id : m_store->ids())
        if (m_store->finish(id, JobState::Failed, "interrupted"))
            spdlog::info("job {} interrupted by shutdown", id);
}

std::string Service::store_upload(const std::string& bytes) {
    const std::string sha = sha256_hex(bytes);
    const fs::path path = m_options.data_dir / "uploads" / sha;
    if (!fs::exists(path))
        write_file_atomic(path, bytes);
    return sha;
}

std::string Service::read_upload(const std::string& sha) const {
    return read_file(m_options.data_dir / "uploads" / sha);
}

std::vector<std::string> Service::submit(const Submission& sub) {
    if (m_stopping)
        throw BackendError("service", "service is shutting down");
    std::vector<FieldError> errors;
    const GridSize size{m_manifest.image_height, m_manifest.image_width};

    auto check_image = [&](const std::optional<std::string>& bytes, const char* field, bool resize) {
        if (!bytes || bytes->empty()) {
            errors.push_back({field, "required"});
            return;
        }
        try {
            (void)decode_image(*bytes, resize ? std::optional(size) : std::nullopt);
        } catch (const std::exception& e) {
            errors.push_back({field, e.what()});
        }
    };
    check_image(sub.image, "image", true);
    check_image(sub.material, "material", false);
    if (!sub.mask || sub.mask->empty()) {
        errors.push_back({"mask", "required"});
    } else {
        try {
            if (!decode_mask(*sub.mask, size).any())
                errors.push_back({"mask", "mask empty"});
        } catch (const std::exception& e) {
            errors.push_back({"mask", e.what()});
        }
    }
    if (sub.source_prompt.empty())
        errors.push_back({"src_prompt", "required"});

    TransferConfig config;
    try {
        const json overrides = sub.config_json.empty() ? json::object() : json::parse(sub.config_json);
        if (!overrides.is_object())
            throw ValidationError("", "must be a JSON object");
        config = make_config(overrides);
    } catch (const ValidationError& e) {
        errors.push_back({e.field().empty() ? "config" : "config." + e.field(), e.what()});
    } catch (const json::exception& e) {
        errors.push_back({"config", std::string("invalid JSON: ") + e.what()});
    }

    std::vector<TransferConfig> configs;
    if (sub.lambdas) {
        if (sub.lambdas->empty())
            errors.push_back({"lambdas", "must not be empty"});
        for (std::size_t i = 0; i < sub.lambdas->size(); ++i) {
            TransferConfig c = config;
            c.lam = (*sub.lambdas)[i];
            try {
                c.validate();
                configs.push_back(c);
            } catch (const ValidationError& e) {
                errors.push_back({fmt::format("lambdas[{}]", i), e.what()});
            }
        }
    } else {
        configs.push_back(config);
    }
    if (!errors.empty())
        throw SubmissionError(std::move(errors));

    StoredInputs inputs;
    inputs.image_sha = store_upload(*sub.image);
    inputs.mask_sha = store_upload(*sub.mask);
    inputs.material_sha = store_upload(*sub.material);
    inputs.prompts.source = sub.source_prompt;
    inputs.prompts.target = sub.target_prompt;
    std::vector<std::string> ids;
    for (const auto& c : configs) {
        inputs.config = c;
        ids.push_back(m_store->create(inputs));
    }
    return ids;
}

void Service::worker_loop(Denoiser& backend) {
    while (auto id = m_store->next_queued())
        run_job(*id, backend);
}

void Service::run_job(const std::string& id, Denoiser& backend) {
    const auto job = m_store->get(id);
    if (!job || job->state != JobState::Queued)
        return;
    try {
        m_store->transition(id, JobState::Inverting);
    } catch (const ValidationError&) {
        return;  // cancelled between dequeue and pickup
    }
    try {
        const GridSize size{m_manifest.image_height, m_manifest.image_width};
        TransferRequest request;
        request.x_init = decode_image(read_upload(job->inputs.image_sha), size);
        request.object_mask = decode_mask(read_upload(job->inputs.mask_sha), size);
        request.y_im = decode_image(read_upload(job->inputs.material_sha));
        request.prompts = job->inputs.prompts;
        request.config = job->inputs.config;

        RunDirectory run = RunDirectory::create(job->run_dir, true);
        RunOptions opts;
        opts.cache = m_cache.get();
        opts.extra = {{"job_id", id}};
        TransferHooks hooks;
        hooks.preview_every = m_options.preview_every;
        hooks.on_phase = [&](TransferPhase phase) {
            if (phase == TransferPhase::Sampling)
                m_store->transition(id, JobState::Sampling);
        };
        hooks.on_step = [&](const StepRecord& r) { m_store->record_step(id, r); };
        // run_transfer writes the file before this hook fires.
        hooks.on_preview = [&](int step, const ImageRGB&) { m_store->publish_preview(id, step, run.preview_path(step)); };
        hooks.cancelled = [&] { return m_stopping.load() || m_store->cancel_requested(id); };

        run_transfer(request, backend, run, opts, hooks);
        m_store->set_result(id, run.result_path());
        m_store->finish(id, JobState::Done);
        spdlog::info("job {} done", id);
    } catch (const CancelledError& e) {
        if (m_stopping)
            m_store->finish(id, JobState::Failed, "interrupted");
        else
            m_store->finish(id, JobState::Cancelled, e.what());
        spdlog::info("job {} stopped: {}", id, e.what());
    } catch (const std::exception& e) {
        m_store->finish(id, JobState::Failed, e.what());
        spdlog::error("job {} failed: {}", id, e.what());
    }
}

}  // namespace matfuse::service
