// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "matfuse/core/image.hpp"
#include "matfuse/core/types.hpp"
#include "matfuse/denoiser/denoiser.hpp"

namespace matfuse {

/// Scaled-linear beta schedule (SD v1.x family) with a uniform-stride DDIM grid.
///
/// Trajectory index t in [0, T]; index t >= 1 maps to native timestep
/// timestep(t) = (t - 1) * (N / T) + offset. Index 0 is the clean latent and
/// uses alphas_cumprod[0] (no alpha-to-one override).
class NoiseSchedule {
public:
    struct Params {
        int train_steps = 1000;
        double beta_start = 0.00085;
        double beta_end = 0.012;
        int steps_offset = 1;
    };

    NoiseSchedule(int ddim_steps, Params params);
    explicit NoiseSchedule(int ddim_steps);

    int steps() const { return m_steps; }
    int train_steps() const { return m_params.train_steps; }
    const std::vector<double>& alphas_cumprod() const { return m_alphas_cumprod; }
    const std::vector<int>& ddim_timesteps() const { return m_timesteps; }

    /// Native timestep fed to the denoiser for trajectory index t (1 <= t <= T).
    int timestep(int t) const;
    /// Cumulative alpha at trajectory index t (0 <= t <= T).
    double alpha(int t) const;

    nlohmann::json metadata() const;

private:
    int m_steps;
    Params m_params;
    std::vector<double> m_alphas_cumprod;
    std::vector<int> m_timesteps;
};

/// One deterministic (eta = 0) DDIM update between arbitrary cumulative alphas.
Tensor ddim_transition(const Tensor& z, const Tensor& eps, double alpha_from, double alpha_to);

/// z_t -> z_{t-1} using `eps` as the noise estimate. Throws at t = 0.
LatentState ddim_step(const LatentState& z, const Tensor& eps, const NoiseSchedule& schedule);

/// z_t -> z_{t+1}. Throws at t = T.
LatentState ddim_inversion_step(const LatentState& z, const Tensor& eps, const NoiseSchedule& schedule);

/// Encode x_init and integrate the DDIM ODE forward under `source_prompt` with an
/// unscaled conditional prediction (w = 1, no guidance). The step t -> t+1
/// evaluates eps(z*_t, timestep(t+1), y_src).
InversionTrajectory ddim_invert(const ImageRGB& x_init, const std::string& source_prompt, Denoiser& backend,
                                const NoiseSchedule& schedule);
InversionTrajectory ddim_invert_latent(const Tensor& z0, const std::string& source_prompt, Denoiser& backend,
                                       const NoiseSchedule& schedule);

/// Plain DDIM sampling from z_T under one conditioning (w = 1). Used for
/// reconstruction checks.
Tensor ddim_sample(const Tensor& z_T, const Conditioning& cond, Denoiser& backend, const NoiseSchedule& schedule);

/// Trajectory cache directory: trajectory.json (metadata) + z_XXX.bin (raw float64, little endian).
void save_trajectory(const InversionTrajectory& trajectory, const NoiseSchedule& schedule,
                     const nlohmann::json& extra, const std::filesystem::path& dir);
InversionTrajectory load_trajectory(const std::filesystem::path& dir, nlohmann::json* metadata = nullptr);

}  // namespace matfuse
