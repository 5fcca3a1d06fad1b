// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "matfuse/core/types.hpp"
#include "matfuse/denoiser/denoiser.hpp"
#include "matfuse/sampler/ddim.hpp"

namespace matfuse::guidance {

/// Internals of the reconstruction branch (star) and the current branch (cur).
struct GuiderSnapshot {
    std::vector<Tensor> attn_star;
    std::vector<Tensor> attn_cur;
    Tensor feat_star;
    Tensor feat_cur;

    void validate() const;
};

/// sum_i mean((A*_i - A_i)^2)
double self_attention_energy(const std::vector<Tensor>& attn_star, const std::vector<Tensor>& attn_cur);
/// mean((Phi* - Phi)^2)
double feature_energy(const Tensor& feat_star, const Tensor& feat_cur);

/// Partial derivatives of the energies with respect to the current-branch internals.
std::vector<Tensor> self_attention_energy_grad(const std::vector<Tensor>& attn_star,
                                               const std::vector<Tensor>& attn_cur);
Tensor feature_energy_grad(const Tensor& feat_star, const Tensor& feat_cur);

struct GuidanceGradient {
    Tensor grad;         // d/dz [v_self * g_self + v_feat * g_feat]
    double g_self = 0.0;  // unscaled energies at z
    double g_feat = 0.0;
    DenoiserInternals current;  // cur-branch internals recorded during the pass
};

/// Gradient of the weighted guider energy with respect to z. The star branch
/// eps(z*_t, t, y_src) only supplies constants; the cur branch eps(z_t, t, y_src)
/// is differentiated through the backend. Costs two backend passes.
GuidanceGradient guidance_gradient(const LatentState& z, const LatentState& z_star, const std::string& source_prompt,
                                   Denoiser& backend, const NoiseSchedule& schedule, double v_self, double v_feat);

struct RescaleState {
    double r_cur = 0.0;
    double gamma = 1.0;
    bool guidance_active = true;  // false when the gradient vanished
};

/// gamma = clamp(r_cur, r_lower, r_upper). NaN maps to r_upper.
double rescale_factor(double r_cur, double r_lower, double r_upper);

/// r_cur = ||delta_cfg||^2 / ||grad||^2 followed by rescale_factor. A zero
/// gradient gives r_cur = +inf, gamma = r_upper and guidance_active = false.
RescaleState compute_rescale(const Tensor& delta_cfg, const Tensor& grad, double r_lower, double r_upper);

/// eps_uncond + w (eps_cond - eps_uncond)
Tensor classifier_free_guidance(const Tensor& eps_cond, const Tensor& eps_uncond, double w);

/// True inside the guidance window: step_index = T - t < tau_g.
bool guidance_window_open(int step_index, int tau_g);

/// eps_cfg, plus gamma * grad when the guidance window is open.
Tensor combine_noise(const Tensor& eps_cond, const Tensor& eps_uncond, const Tensor& grad, double w, double gamma,
                     int step_index, int tau_g);

}  // namespace matfuse::guidance
