// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "matfuse/service/jobs.hpp"

#include <random>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "matfuse/errors.hpp"

namespace matfuse::service {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kStateNames[] = {"queued", "inverting", "sampling", "done", "failed", "cancelled"};

std::string iso_time(std::chrono::system_clock::time_point tp) {
    const std::time_t t = std::chrono::system_clock::to_time_t(tp);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string random_id() {
    static thread_local std::random_device rd;
    std::uniform_int_distribution<std::uint64_t> dist;
    const std::uint64_t hi = (std::uint64_t(rd()) << 32) ^ rd() ^ dist(rd);
    const std::uint64_t lo = (std::uint64_t(rd()) << 32) ^ rd();
    return fmt::format("{:016x}{:016x}", hi, lo);
}

json inputs_json(const StoredInputs& in) {
    return {{"image", in.image_sha},
            {"mask", in.mask_sha},
            {"material", in.material_sha},
            {"prompts", {{"source", in.prompts.source}, {"target", in.prompts.target}}},
            {"config", to_json(in.config)}};
}

StoredInputs inputs_from_json(const json& j) {
    StoredInputs in;
    in.image_sha = j.at("image").get<std::string>();
    in.mask_sha = j.at("mask").get<std::string>();
    in.material_sha = j.at("material").get<std::string>();
    in.prompts.source = j.at("prompts").at("source").get<std::string>();
    in.prompts.target = j.at("prompts").at("target").get<std::string>();
    in.config = make_config(j.at("config"));
    return in;
}

json step_json(const StepRecord& r) {
    auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
    return {{"step", r.step},      {"t", r.t},           {"timestep", r.timestep}, {"lambda", r.lambda},
            {"guided", r.guided},  {"blended", r.blended}, {"g_self", num(r.g_self)}, {"g_feat", num(r.g_feat)},
            {"r_cur", num(r.r_cur)}, {"gamma", num(r.gamma)}, {"passes", r.passes}};
}

}  // namespace

std::string to_string(JobState state) { return kStateNames[static_cast<int>(state)]; }

JobState parse_job_state(const std::string& name) {
    for (int i = 0; i < 6; ++i)
        if (name == kStateNames[i])
            return static_cast<JobState>(i);
    throw ValidationError("state", "unknown job state '" + name + "'");
}

bool is_terminal(JobState s) { return s == JobState::Done || s == JobState::Failed || s == JobState::Cancelled; }

bool transition_allowed(JobState from, JobState to) {
    if (is_terminal(from))
        return false;
    switch (to) {
        case JobState::Inverting:
            return from == JobState::Queued;
        case JobState::Sampling:
            return from == JobState::Inverting;
        case JobState::Done:
            return from == JobState::Sampling;
        case JobState::Failed:
        case JobState::Cancelled:
            return true;
        case JobState::Queued:
            return false;
    }
    return false;
}

JobStore::JobStore(fs::path data_dir, std::size_t tail_length) : m_dir(std::move(data_dir)), m_tail(tail_length) {
    fs::create_directories(m_dir);
    restore();
    m_log.open(m_dir / "jobs.jsonl", std::ios::app);
    if (!m_log)
        throw IoError("cannot open audit log in " + m_dir.string());
    const auto now = std::chrono::system_clock::now();
    for (auto& [id, job] : m_jobs) {
        if (is_terminal(job.state))
            continue;
        job.error = "interrupted";
        transition_locked(job, JobState::Failed, "interrupted");
        job.updated = now;
    }
}

void JobStore::restore() {
    std::ifstream in(m_dir / "jobs.jsonl");
    if (!in)
        return;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        try {
            const json ev = json::parse(line);
            const std::string id = ev.at("id").get<std::string>();
            m_used_ids.insert(id);
            const std::string kind = ev.at("event").get<std::string>();
            if (kind == "submitted") {
                JobRecord job;
                job.id = id;
                job.inputs = inputs_from_json(ev.at("inputs"));
                job.total_steps = job.inputs.config.T;
                job.run_dir = m_dir / "jobs" / id;
                m_jobs[id] = std::move(job);
            } else if (kind == "transition") {
                auto it = m_jobs.find(id);
                if (it == m_jobs.end())
                    continue;
                it->second.state = parse_job_state(ev.at("to").get<std::string>());
                if (ev.contains("reason") && it->second.state == JobState::Failed)
                    it->second.error = ev["reason"].get<std::string>();
            }
        } catch (const std::exception& e) {
            spdlog::warn("jobs.jsonl:{}: skipping unreadable event: {}", lineno, e.what());
        }
    }
    for (auto& [id, job] : m_jobs) {
        if (job.state == JobState::Done) {
            job.steps_done = job.total_steps;
            if (fs::exists(job.run_dir / "result.png"))
                job.result_path = job.run_dir / "result.png";
        }
        if (fs::is_directory(job.run_dir / "previews")) {
            for (const auto& e : fs::directory_iterator(job.run_dir / "previews")) {
                const std::string name = e.path().filename().string();
                int step = 0;
                if (std::sscanf(name.c_str(), "step_%d.png", &step) == 1 && (!job.preview_step || step > *job.preview_step)) {
                    job.preview_step = step;
                    job.preview_path = e.path();
                }
            }
        }
    }
}

void JobStore::append_log(const json& event) {
    m_log << event.dump() << '\n';
    m_log.flush();
}

std::string JobStore::create(const StoredInputs& inputs) {
    std::lock_guard lock(m_mutex);
    std::string id;
    do {
        id = random_id();
    } while (m_used_ids.count(id));
    m_used_ids.insert(id);
    JobRecord job;
    job.id = id;
    job.inputs = inputs;
    job.total_steps = inputs.config.T;
    job.run_dir = m_dir / "jobs" / id;
    job.created = job.updated = std::chrono::system_clock::now();
    append_log({{"event", "submitted"}, {"id", id}, {"time", iso_time(job.created)}, {"inputs", inputs_json(inputs)}});
    m_jobs[id] = std::move(job);
    m_queue.push_back(id);
    m_cv.notify_one();
    return id;
}

JobRecord& JobStore::require(const std::string& id) {
    auto it = m_jobs.find(id);
    if (it == m_jobs.end())
        throw ValidationError("id", "unknown job " + id);
    return it->second;
}

void JobStore::transition_locked(JobRecord& job, JobState to, const std::string& reason) {
    if (!transition_allowed(job.state, to))
        throw ValidationError("state", fmt::format("job {} cannot move from {} to {}", job.id, to_string(job.state),
                                                   to_string(to)));
    json ev = {{"event", "transition"},
               {"id", job.id},
               {"from", to_string(job.state)},
               {"to", to_string(to)},
               {"time", iso_time(std::chrono::system_clock::now())}};
    if (!reason.empty())
        ev["reason"] = reason;
    append_log(ev);
    job.state = to;
    job.updated = std::chrono::system_clock::now();
    if (to == JobState::Failed && !reason.empty())
        job.error = reason;
}

void JobStore::transition(const std::string& id, JobState to, const std::string& reason) {
    std::lock_guard lock(m_mutex);
    transition_locked(require(id), to, reason);
}

bool JobStore::finish(const std::string& id, JobState to, const std::string& reason) {
    std::lock_guard lock(m_mutex);
    JobRecord& job = require(id);
    if (is_terminal(job.state))
        return false;
    transition_locked(job, to, reason);
    return true;
}

void JobStore::record_step(const std::string& id, const StepRecord& step) {
    std::lock_guard lock(m_mutex);
    JobRecord& job = require(id);
    job.steps_done = std::max(job.steps_done, step.step + 1);
    job.tail.push_back(step);
    while (job.tail.size() > m_tail)
        job.tail.pop_front();
    job.updated = std::chrono::system_clock::now();
}

void JobStore::publish_preview(const std::string& id, int step, const fs::path& path) {
    std::lock_guard lock(m_mutex);
    JobRecord& job = require(id);
    job.preview_step = step;
    job.preview_path = path;
}

void JobStore::set_result(const std::string& id, const fs::path& path) {
    std::lock_guard lock(m_mutex);
    require(id).result_path = path;
}

void JobStore::set_run_dir(const std::string& id, const fs::path& dir) {
    std::lock_guard lock(m_mutex);
    require(id).run_dir = dir;
}

JobStore::CancelOutcome JobStore::request_cancel(const std::string& id) {
    std::lock_guard lock(m_mutex);
    auto it = m_jobs.find(id);
    if (it == m_jobs.end())
        return {};
    JobRecord& job = it->second;
    CancelOutcome out{true, false, job.state};
    if (is_terminal(job.state)) {
        out.noop = true;
        return out;
    }
    job.cancel_requested = true;
    if (job.state == JobState::Queued) {
        std::erase(m_queue, id);
        transition_locked(job, JobState::Cancelled, "cancelled before start");
    }
    out.state = job.state;
    return out;
}

bool JobStore::cancel_requested(const std::string& id) const {
    std::lock_guard lock(m_mutex);
    auto it = m_jobs.find(id);
    return it != m_jobs.end() && it->second.cancel_requested;
}

std::optional<JobRecord> JobStore::get(const std::string& id) const {
    std::lock_guard lock(m_mutex);
    auto it = m_jobs.find(id);
    if (it == m_jobs.end())
        return std::nullopt;
    return it->second;
}

std::vector<std::string> JobStore::ids() const {
    std::lock_guard lock(m_mutex);
    std::vector<std::string> out;
    for (const auto& [id, _] : m_jobs)
        out.push_back(id);
    return out;
}

std::size_t JobStore::count(JobState state) const {
    std::lock_guard lock(m_mutex);
    std::size_t n = 0;
    for (const auto& [_, job] : m_jobs)
        n += job.state == state;
    return n;
}

std::optional<std::string> JobStore::next_queued() {
    std::unique_lock lock(m_mutex);
    m_cv.wait(lock, [this] { return m_stopping || !m_queue.empty(); });
    if (m_stopping)
        return std::nullopt;
    std::string id = m_queue.front();
    m_queue.pop_front();
    return id;
}

void JobStore::stop() {
    {
        std::lock_guard lock(m_mutex);
        m_stopping = true;
    }
    m_cv.notify_all();
}

json JobStore::view(const JobRecord& job) const {
    json tail = json::array();
    for (const auto& s : job.tail)
        tail.push_back(step_json(s));
    double progress = job.total_steps > 0 ? double(job.steps_done) / job.total_steps : 0.0;
    if (job.state == JobState::Done)
        progress = 1.0;
    json out = {{"id", job.id},
                {"state", to_string(job.state)},
                {"progress", progress},
                {"steps_done", job.steps_done},
                {"total_steps", job.total_steps},
                {"preview_step", job.preview_step ? json(*job.preview_step) : json(nullptr)},
                {"has_result", job.state == JobState::Done && !job.result_path.empty()},
                {"cancel_requested", job.cancel_requested},
                {"tail", tail},
                {"prompts", {{"source", job.inputs.prompts.source}, {"target", job.inputs.prompts.target}}},
                {"config", to_json(job.inputs.config)}};
    if (!job.error.empty())
        out["error"] = job.error;
    if (job.created.time_since_epoch().count())
        out["created"] = iso_time(job.created);
    if (job.updated.time_since_epoch().count())
        out["updated"] = iso_time(job.updated);
    return out;
}

}  // namespace matfuse::service
