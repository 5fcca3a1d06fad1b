// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "matfuse/denoiser/remote.hpp"

#include <cerrno>
#include <chrono>
#include <cstring>
#include <thread>

#include <fcntl.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <spdlog/spdlog.h>

#include "matfuse/denoiser/wire.hpp"
#include "matfuse/errors.hpp"

namespace matfuse {

using nlohmann::json;

WorkerProcess::WorkerProcess(const std::vector<std::string>& argv, const std::map<std::string, std::string>& env) {
    if (argv.empty())
        throw BackendError("worker", "empty worker command");
    m_program = argv.front();
    int fds[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0)
        throw BackendError("worker", std::string("socketpair: ") + std::strerror(errno));

    std::vector<char*> args;
    for (const auto& a : argv)
        args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);

    const pid_t pid = ::fork();
    if (pid < 0) {
        ::close(fds[0]);
        ::close(fds[1]);
        throw BackendError("worker", std::string("fork: ") + std::strerror(errno));
    }
    if (pid == 0) {
        ::dup2(fds[1], STDIN_FILENO);
        ::dup2(fds[1], STDOUT_FILENO);
        for (const auto& [k, v] : env)
            ::setenv(k.c_str(), v.c_str(), 1);
        ::execvp(args[0], args.data());
        ::_exit(127);
    }
    ::close(fds[1]);
    m_pid = pid;
    m_fd = fds[0];
}

WorkerProcess::~WorkerProcess() {
    if (m_fd >= 0) {
        ::shutdown(m_fd, SHUT_WR);
        ::close(m_fd);
    }
    if (m_pid <= 0)
        return;
    // Closing the socket is the shutdown signal; escalate if the worker lingers.
    for (int i = 0; i < 100; ++i) {
        if (::waitpid(m_pid, nullptr, WNOHANG) == m_pid)
            return;
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    ::kill(m_pid, SIGKILL);
    ::waitpid(m_pid, nullptr, 0);
}

void WorkerProcess::write_line(const std::string& line) {
    std::size_t sent = 0;
    while (sent < line.size()) {
        const ssize_t n = ::send(m_fd, line.data() + sent, line.size() - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR)
                continue;
            throw BackendError("worker", m_program + " is not accepting requests (" + exit_description() + ")");
        }
        sent += static_cast<std::size_t>(n);
    }
}

std::string WorkerProcess::read_line() {
    char chunk[65536];
    for (;;) {
        if (const auto nl = m_buffer.find('\n'); nl != std::string::npos) {
            std::string line = m_buffer.substr(0, nl);
            m_buffer.erase(0, nl + 1);
            return line;
        }
        const ssize_t n = ::recv(m_fd, chunk, sizeof chunk, 0);
        if (n < 0 && errno == EINTR)
            continue;
        if (n <= 0)
            throw BackendError("worker", m_program + " closed the connection (" + exit_description() + ")");
        m_buffer.append(chunk, static_cast<std::size_t>(n));
    }
}

std::string WorkerProcess::exit_description() {
    int status = 0;
    pid_t r = 0;
    for (int i = 0; i < 50 && (r = ::waitpid(m_pid, &status, WNOHANG)) == 0; ++i)
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    if (r != m_pid)
        return "still running";
    m_pid = -1;
    if (WIFEXITED(status))
        return WEXITSTATUS(status) == 127 ? "could not execute" : "exit status " + std::to_string(WEXITSTATUS(status));
    if (WIFSIGNALED(status))
        return "killed by signal " + std::to_string(WTERMSIG(status));
    return "terminated";
}

json WorkerProcess::call(const json& request) {
    write_line(request.dump() + "\n");
    const std::string line = read_line();
    try {
        return json::parse(line);
    } catch (const json::exception&) {
        throw BackendError("worker", "unparseable reply from " + m_program + ": " + line.substr(0, 200));
    }
}

RemoteDenoiser::RemoteDenoiser(std::unique_ptr<WorkerProcess> process) : m_process(std::move(process)) {
    const json reply = call({{"op", "manifest"}});
    try {
        m_manifest = manifest_from_json(reply.at("manifest"));
    } catch (const json::exception& e) {
        throw BackendError("worker", std::string("manifest reply: ") + e.what());
    }
}

RemoteDenoiser::~RemoteDenoiser() {
    try {
        m_process->call({{"op", "shutdown"}});
    } catch (const std::exception& e) {
        spdlog::debug("worker shutdown: {}", e.what());
    }
}

json RemoteDenoiser::call(const json& request) {
    json reply = m_process->call(request);
    if (!reply.value("ok", false))
        wire::throw_reply(reply);
    return reply;
}

NoisePrediction RemoteDenoiser::do_predict_noise(const Tensor& latent, int timestep, const Conditioning& cond,
                                                 bool record_internals) {
    const json reply = call({{"op", "predict"},
                             {"latent", wire::encode(latent)},
                             {"timestep", timestep},
                             {"cond", wire::encode(cond)},
                             {"record", record_internals}});
    NoisePrediction out{wire::decode_tensor(reply.at("noise")), std::nullopt};
    if (record_internals)
        out.internals = wire::decode_internals(reply.at("internals"));
    return out;
}

InternalsPullback RemoteDenoiser::do_internals_pullback(const Tensor& latent, int timestep, const Conditioning& cond,
                                                        const CotangentFn& cotangent) {
    const json first = call({{"op", "pullback"},
                             {"latent", wire::encode(latent)},
                             {"timestep", timestep},
                             {"cond", wire::encode(cond)}});
    InternalsPullback out;
    out.internals = wire::decode_internals(first.at("internals"));
    DenoiserInternals cot;
    try {
        cot = cotangent(out.internals);
    } catch (...) {
        // Keep the worker in step before propagating.
        m_process->call({{"op", "pullback_abort"}});
        throw;
    }
    const json second = call({{"op", "cotangent"}, {"cotangent", wire::encode(cot)}});
    out.latent_grad = wire::decode_tensor(second.at("latent_grad"));
    return out;
}

MaterialEmbedding RemoteDenoiser::do_embed_material(const ImageRGB& image) {
    return {wire::decode_tensor(call({{"op", "embed"}, {"image", wire::encode(image)}}).at("tokens"))};
}

Tensor RemoteDenoiser::do_encode(const ImageRGB& image) {
    return wire::decode_tensor(call({{"op", "encode"}, {"image", wire::encode(image)}}).at("latent"));
}

ImageRGB RemoteDenoiser::do_decode(const Tensor& latent) {
    return wire::decode_image(call({{"op", "decode"}, {"latent", wire::encode(latent)}}).at("image"));
}

void serve_denoiser(Denoiser& backend, std::istream& in, std::ostream& out) {
    const auto send = [&out](const json& reply) { out << reply.dump() << '\n' << std::flush; };
    const auto receive = [&in](json& request) {
        std::string line;
        while (std::getline(in, line))
            if (!line.empty()) {
                request = json::parse(line, nullptr, false);
                if (request.is_discarded() || !request.is_object())
                    request = {{"op", "<malformed request>"}};
                return true;
            }
        return false;
    };
    json request;
    while (receive(request)) {
        const std::string op = request.value("op", "");
        try {
            if (op == "manifest") {
                send({{"ok", true}, {"manifest", to_json(backend.manifest())}});
            } else if (op == "predict") {
                const NoisePrediction p =
                    backend.predict_noise(wire::decode_tensor(request.at("latent")), request.at("timestep").get<int>(),
                                          wire::decode_conditioning(request.at("cond")), request.value("record", false));
                json reply = {{"ok", true}, {"noise", wire::encode(p.noise)}};
                if (p.internals)
                    reply["internals"] = wire::encode(*p.internals);
                send(reply);
            } else if (op == "pullback") {
                const auto cotangent = [&](const DenoiserInternals& current) {
                    send({{"ok", true}, {"internals", wire::encode(current)}});
                    json next;
                    if (!receive(next))
                        throw BackendError("worker", "client left during a pullback");
                    if (next.value("op", "") != "cotangent")
                        throw BackendError("worker", "pullback aborted by client");
                    return wire::decode_internals(next.at("cotangent"));
                };
                const InternalsPullback r =
                    backend.internals_pullback(wire::decode_tensor(request.at("latent")),
                                               request.at("timestep").get<int>(),
                                               wire::decode_conditioning(request.at("cond")), cotangent);
                send({{"ok", true}, {"latent_grad", wire::encode(r.latent_grad)}});
            } else if (op == "embed") {
                send({{"ok", true},
                      {"tokens", wire::encode(backend.embed_material(wire::decode_image(request.at("image"))).tokens)}});
            } else if (op == "encode") {
                send({{"ok", true}, {"latent", wire::encode(backend.encode(wire::decode_image(request.at("image"))))}});
            } else if (op == "decode") {
                send({{"ok", true}, {"image", wire::encode(backend.decode(wire::decode_tensor(request.at("latent"))))}});
            } else if (op == "pullback_abort") {
                send({{"ok", true}});
            } else if (op == "shutdown") {
                send({{"ok", true}});
                return;
            } else {
                throw BackendError("worker", "unknown op '" + op + "'");
            }
        } catch (const std::exception& e) {
            send(wire::error_reply(e));
        }
    }
}

}  // namespace matfuse
