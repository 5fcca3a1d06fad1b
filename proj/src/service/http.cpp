// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <sstream>

#include <spdlog/spdlog.h>

#include "matfuse/errors.hpp"
#include "matfuse/service/service.hpp"

// After Eigen: <resolv.h> defines a `_res` macro.
#include <httplib.h>

namespace matfuse::service {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kMaxUpload = 64u << 20;

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message, json fields = json::array()) {
    send_json(res, status, {{"error", message}, {"fields", std::move(fields)}});
}

std::optional<std::string> form_value(const httplib::Request& req, const char* name) {
    if (req.has_file(name))
        return req.get_file_value(name).content;
    if (req.has_param(name))
        return req.get_param_value(name);
    return std::nullopt;
}

/// "[0.2, 0.5]" or "0.2,0.5".
std::vector<double> parse_lambdas(const std::string& text) {
    std::vector<double> out;
    const json parsed = json::parse(text, nullptr, false);
    if (!parsed.is_discarded()) {
        if (parsed.is_number())
            return {parsed.get<double>()};
        if (!parsed.is_array())
            throw ValidationError("lambdas", "expected a list of numbers");
        for (const auto& v : parsed) {
            if (!v.is_number())
                throw ValidationError("lambdas", "expected a list of numbers");
            out.push_back(v.get<double>());
        }
        return out;
    }
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (item.find_first_not_of(" \t", used) != std::string::npos)
                throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ValidationError("lambdas", "not a number: '" + item + "'");
        }
    }
    return out;
}

void send_file(httplib::Response& res, const fs::path& path, const char* type) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        send_error(res, 404, "file missing");
        return;
    }
    res.set_content(std::string(std::istreambuf_iterator<char>(in), {}), type);
}

}  // namespace

void Service::register_routes(httplib::Server& server) {
    server.set_payload_max_length(kMaxUpload);
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type"}});
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    server.set_exception_handler([](const httplib::Request& req, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "internal error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            what = e.what();
        } catch (...) {
        }
        spdlog::error("{} {}: {}", req.method, req.path, what);
        send_error(res, 500, what);
    });

    server.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200,
                  {{"ok", !m_stopping.load()},
                   {"backend", m_manifest.name},
                   {"workers", m_workers.size()},
                   {"queued", m_store->count(JobState::Queued)},
                   {"running", m_store->count(JobState::Inverting) + m_store->count(JobState::Sampling)}});
    });

    server.Post("/jobs", [this](const httplib::Request& req, httplib::Response& res) {
        Submission sub;
        sub.image = form_value(req, "image");
        sub.mask = form_value(req, "mask");
        sub.material = form_value(req, "material");
        sub.source_prompt = form_value(req, "src_prompt").value_or("");
        sub.target_prompt = form_value(req, "trg_prompt").value_or("");
        sub.config_json = form_value(req, "config").value_or("");
        try {
            if (auto l = form_value(req, "lambdas"))
                sub.lambdas = parse_lambdas(*l);
            const auto ids = submit(sub);
            json jobs = json::array();
            for (const auto& id : ids)
                jobs.push_back({{"id", id}, {"state", "queued"}});
            json body = jobs.front();
            if (ids.size() > 1)
                body["jobs"] = jobs;
            send_json(res, 202, body);
        } catch (const SubmissionError& e) {
            json fields = json::array();
            for (const auto& f : e.errors())
                fields.push_back({{"field", f.field}, {"message", f.message}});
            send_error(res, 400, e.what(), fields);
        } catch (const ValidationError& e) {
            send_error(res, 400, e.what(), json::array({{{"field", e.field()}, {"message", e.what()}}}));
        } catch (const BackendError& e) {
            send_error(res, 503, e.what());
        }
    });

    server.Get("/jobs", [this](const httplib::Request&, httplib::Response& res) {
        json out = json::array();
        for (const auto& id : m_store->ids())
            if (auto job = m_store->get(id))
                out.push_back({{"id", id}, {"state", to_string(job->state)}});
        send_json(res, 200, {{"jobs", out}});
    });

    server.Get("/jobs/:id", [this](const httplib::Request& req, httplib::Response& res) {
        const auto job = m_store->get(req.path_params.at("id"));
        if (!job)
            return send_error(res, 404, "unknown job");
        send_json(res, 200, m_store->view(*job));
    });

    server.Get("/jobs/:id/preview", [this](const httplib::Request& req, httplib::Response& res) {
        const auto job = m_store->get(req.path_params.at("id"));
        if (!job)
            return send_error(res, 404, "unknown job");
        if (!job->preview_step)
            return send_error(res, 404, "no preview yet");
        res.set_header("X-Preview-Step", std::to_string(*job->preview_step));
        send_file(res, job->preview_path, "image/png");
    });

    server.Get("/jobs/:id/result", [this](const httplib::Request& req, httplib::Response& res) {
        const auto job = m_store->get(req.path_params.at("id"));
        if (!job)
            return send_error(res, 404, "unknown job");
        if (job->state != JobState::Done)
            return send_error(res, 409, "job is " + to_string(job->state));
        send_file(res, job->result_path, "image/png");
    });

    server.Post("/jobs/:id/cancel", [this](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.path_params.at("id");
        const auto outcome = m_store->request_cancel(id);
        if (!outcome.known)
            return send_error(res, 404, "unknown job");
        send_json(res, 200, {{"id", id}, {"state", to_string(outcome.state)}, {"noop", outcome.noop}});
    });
}

}  // namespace matfuse::service
