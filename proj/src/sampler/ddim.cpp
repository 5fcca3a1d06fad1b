// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "matfuse/sampler/ddim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>

#include "matfuse/errors.hpp"

namespace matfuse {

static_assert(std::endian::native == std::endian::little, "trajectory cache assumes a little-endian host");

NoiseSchedule::NoiseSchedule(int ddim_steps) : NoiseSchedule(ddim_steps, Params{}) {}

NoiseSchedule::NoiseSchedule(int ddim_steps, Params params) : m_steps(ddim_steps), m_params(params) {
    if (params.train_steps < 2)
        throw ValidationError("train_steps", "must be >= 2");
    if (ddim_steps < 1 || ddim_steps > params.train_steps)
        throw ValidationError("T", "must be in [1, " + std::to_string(params.train_steps) + "]");

    const int n = params.train_steps;
    const double s0 = std::sqrt(params.beta_start), s1 = std::sqrt(params.beta_end);
    m_alphas_cumprod.resize(static_cast<std::size_t>(n));
    double prod = 1.0;
    for (int i = 0; i < n; ++i) {
        const double s = s0 + (s1 - s0) * static_cast<double>(i) / static_cast<double>(n - 1);
        prod *= 1.0 - s * s;
        m_alphas_cumprod[static_cast<std::size_t>(i)] = prod;
    }

    const int ratio = n / ddim_steps;
    const int offset = std::max(0, std::min(params.steps_offset, n - 1 - (ddim_steps - 1) * ratio));
    m_timesteps.resize(static_cast<std::size_t>(ddim_steps));
    for (int t = 1; t <= ddim_steps; ++t)
        m_timesteps[static_cast<std::size_t>(t - 1)] = (t - 1) * ratio + offset;
}

int NoiseSchedule::timestep(int t) const {
    if (t < 1 || t > m_steps)
        throw ValidationError("t", "trajectory index " + std::to_string(t) + " has no denoiser timestep");
    return m_timesteps[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::alpha(int t) const {
    if (t < 0 || t > m_steps)
        throw ValidationError("t", "trajectory index " + std::to_string(t) + " outside [0, T]");
    if (t == 0)
        return m_alphas_cumprod.front();
    return m_alphas_cumprod[static_cast<std::size_t>(timestep(t))];
}

nlohmann::json NoiseSchedule::metadata() const {
    return {{"beta_schedule", "scaled_linear"},
            {"beta_start", m_params.beta_start},
            {"beta_end", m_params.beta_end},
            {"train_steps", m_params.train_steps},
            {"steps_offset", m_params.steps_offset},
            {"ddim_steps", m_steps},
            {"eta", 0.0},
            {"timesteps", m_timesteps}};
}

Tensor ddim_transition(const Tensor& z, const Tensor& eps, double alpha_from, double alpha_to) {
    require_same_shape(z, eps, "ddim update");
    const double a = std::sqrt(alpha_from), sa = std::sqrt(1.0 - alpha_from);
    const double b = std::sqrt(alpha_to), sb = std::sqrt(1.0 - alpha_to);
    Tensor out(z.shape());
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double x0 = (z[i] - sa * eps[i]) / a;
        out[i] = b * x0 + sb * eps[i];
    }
    return out;
}

LatentState ddim_step(const LatentState& z, const Tensor& eps, const NoiseSchedule& schedule) {
    if (z.t < 1 || z.t > schedule.steps())
        throw ValidationError("t", "ddim_step needs 1 <= t <= T, got " + std::to_string(z.t));
    return {ddim_transition(z.data, eps, schedule.alpha(z.t), schedule.alpha(z.t - 1)), z.t - 1};
}

LatentState ddim_inversion_step(const LatentState& z, const Tensor& eps, const NoiseSchedule& schedule) {
    if (z.t < 0 || z.t >= schedule.steps())
        throw ValidationError("t", "inversion step needs 0 <= t < T, got " + std::to_string(z.t));
    return {ddim_transition(z.data, eps, schedule.alpha(z.t), schedule.alpha(z.t + 1)), z.t + 1};
}

InversionTrajectory ddim_invert_latent(const Tensor& z0, const std::string& source_prompt, Denoiser& backend,
                                       const NoiseSchedule& schedule) {
    InversionTrajectory traj;
    traj.source_prompt = source_prompt;
    traj.latents.reserve(static_cast<std::size_t>(schedule.steps()) + 1);
    traj.latents.push_back({z0, 0});
    const Conditioning cond = Conditioning::text(source_prompt);
    for (int t = 0; t < schedule.steps(); ++t) {
        const LatentState& cur = traj.latents.back();
        const Tensor eps = backend.predict_noise(cur.data, schedule.timestep(t + 1), cond, false).noise;
        LatentState next = ddim_inversion_step(cur, eps, schedule);
        if (!all_finite(next.data))
            throw NumericError(t + 1, "non-finite latent during inversion at t=" + std::to_string(t + 1));
        traj.latents.push_back(std::move(next));
    }
    return traj;
}

InversionTrajectory ddim_invert(const ImageRGB& x_init, const std::string& source_prompt, Denoiser& backend,
                                const NoiseSchedule& schedule) {
    return ddim_invert_latent(backend.encode(x_init), source_prompt, backend, schedule);
}

Tensor ddim_sample(const Tensor& z_T, const Conditioning& cond, Denoiser& backend, const NoiseSchedule& schedule) {
    LatentState z{z_T, schedule.steps()};
    while (z.t > 0) {
        const Tensor eps = backend.predict_noise(z.data, schedule.timestep(z.t), cond, false).noise;
        z = ddim_step(z, eps, schedule);
    }
    return std::move(z.data);
}

void save_trajectory(const InversionTrajectory& trajectory, const NoiseSchedule& schedule,
                     const nlohmann::json& extra, const std::filesystem::path& dir) {
    if (trajectory.latents.empty())
        throw ValidationError("trajectory", "nothing to save");
    std::filesystem::create_directories(dir);
    const Shape shape = trajectory.latents.front().data.shape();
    nlohmann::json meta = {{"format", "matfuse-trajectory-v1"},
                           {"steps", trajectory.steps()},
                           {"latent_shape", shape},
                           {"dtype", "float64-le"},
                           {"source_prompt", trajectory.source_prompt},
                           {"schedule", schedule.metadata()},
                           {"extra", extra}};

    const auto tmp = dir / "latents.bin.tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out)
            throw IoError("cannot write " + tmp.string());
        for (const auto& z : trajectory.latents)
            out.write(reinterpret_cast<const char*>(z.data.data()),
                      static_cast<std::streamsize>(z.data.size() * sizeof(double)));
        if (!out)
            throw IoError("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, dir / "latents.bin");
    std::ofstream(dir / "trajectory.json") << meta.dump(2) << "\n";
}

InversionTrajectory load_trajectory(const std::filesystem::path& dir, nlohmann::json* metadata) {
    std::ifstream meta_in(dir / "trajectory.json");
    if (!meta_in)
        throw IoError("no trajectory cache in " + dir.string());
    nlohmann::json meta;
    try {
        meta_in >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("corrupt trajectory metadata in " + dir.string() + ": " + e.what());
    }
    const int steps = meta.at("steps").get<int>();
    const Shape shape = meta.at("latent_shape").get<Shape>();
    const std::size_t numel = shape_numel(shape);

    std::ifstream in(dir / "latents.bin", std::ios::binary);
    if (!in)
        throw IoError("missing latents.bin in " + dir.string());
    InversionTrajectory traj;
    traj.source_prompt = meta.at("source_prompt").get<std::string>();
    for (int t = 0; t <= steps; ++t) {
        std::vector<double> values(numel);
        in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(numel * sizeof(double)));
        if (!in)
            throw IoError("truncated trajectory cache in " + dir.string());
        traj.latents.push_back({Tensor(shape, std::move(values)), t});
    }
    traj.validate(steps);
    if (metadata)
        *metadata = std::move(meta);
    return traj;
}

}  // namespace matfuse
