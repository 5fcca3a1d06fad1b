// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "matfuse/pipeline/transfer.hpp"

namespace matfuse::service {

enum class JobState { Queued, Inverting, Sampling, Done, Failed, Cancelled };

std::string to_string(JobState state);
JobState parse_job_state(const std::string& name);
bool is_terminal(JobState state);
/// queued -> inverting -> sampling -> {done, failed, cancelled}; any
/// non-terminal state may also move to failed or cancelled.
bool transition_allowed(JobState from, JobState to);

struct StoredInputs {
    std::string image_sha;
    std::string mask_sha;
    std::string material_sha;
    PromptSet prompts;
    TransferConfig config;
};

struct JobRecord {
    std::string id;
    JobState state = JobState::Queued;
    StoredInputs inputs;
    int steps_done = 0;
    int total_steps = 0;
    std::optional<int> preview_step;
    std::filesystem::path preview_path;
    std::filesystem::path result_path;
    std::filesystem::path run_dir;
    std::string error;
    std::deque<StepRecord> tail;
    bool cancel_requested = false;
    std::chrono::system_clock::time_point created;
    std::chrono::system_clock::time_point updated;
};

/// Thread-safe job registry with an append-only audit log (jobs.jsonl).
/// Opening a directory with an existing log restores every job; jobs that were
/// not terminal are moved to failed with reason "interrupted".
class JobStore {
public:
    JobStore(std::filesystem::path data_dir, std::size_t tail_length = 5);

    const std::filesystem::path& data_dir() const { return m_dir; }

    /// Fresh id, never one present in the log.
    std::string create(const StoredInputs& inputs);

    /// Throws ValidationError("state", ...) on a disallowed transition.
    void transition(const std::string& id, JobState to, const std::string& reason = {});

    /// Terminal-state transition unless the job is already terminal. Returns false when it was.
    bool finish(const std::string& id, JobState to, const std::string& reason = {});

    void record_step(const std::string& id, const StepRecord& step);
    void publish_preview(const std::string& id, int step, const std::filesystem::path& path);
    void set_result(const std::string& id, const std::filesystem::path& path);
    void set_run_dir(const std::string& id, const std::filesystem::path& dir);

    struct CancelOutcome {
        bool known = false;
        bool noop = false;  // job was already terminal
        JobState state = JobState::Queued;
    };
    /// Queued jobs are cancelled at once; running jobs are flagged for the sampler.
    CancelOutcome request_cancel(const std::string& id);
    bool cancel_requested(const std::string& id) const;

    std::optional<JobRecord> get(const std::string& id) const;
    std::vector<std::string> ids() const;
    std::size_t count(JobState state) const;

    /// Blocks until a queued job is available or `stop` is called. Returns nullopt on stop.
    std::optional<std::string> next_queued();
    void stop();

    nlohmann::json view(const JobRecord& job) const;

private:
    void append_log(const nlohmann::json& event);
    void restore();
    JobRecord& require(const std::string& id);
    void transition_locked(JobRecord& job, JobState to, const std::string& reason);

    std::filesystem::path m_dir;
    std::size_t m_tail;
    mutable std::mutex m_mutex;
    std::condition_variable m_cv;
    std::map<std::string, JobRecord> m_jobs;
    std::set<std::string> m_used_ids;
    std::deque<std::string> m_queue;
    std::ofstream m_log;
    bool m_stopping = false;
};

}  // namespace matfuse::service
