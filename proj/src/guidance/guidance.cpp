// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "matfuse/guidance/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "matfuse/errors.hpp"

namespace matfuse::guidance {

namespace {

// Accumulated in long double so the energy stays meaningful for finite-difference checks.
double mean_squared_difference(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "energy");
    if (a.empty())
        return 0.0;
    long double sum = 0.0L;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const long double d = static_cast<long double>(a[i]) - static_cast<long double>(b[i]);
        sum += d * d;
    }
    return static_cast<double>(sum / static_cast<long double>(a.size()));
}

Tensor mean_squared_difference_grad(const Tensor& star, const Tensor& cur) {
    require_same_shape(star, cur, "energy gradient");
    Tensor g(cur.shape());
    if (cur.empty())
        return g;
    const double scale = 2.0 / static_cast<double>(cur.size());
    for (std::size_t i = 0; i < cur.size(); ++i)
        g[i] = scale * (cur[i] - star[i]);
    return g;
}

void require_same_layers(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    if (a.size() != b.size())
        throw ShapeError("self-attention energy: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()) +
                         " layers");
}

}  // namespace

void GuiderSnapshot::validate() const {
    require_same_layers(attn_star, attn_cur);
    for (std::size_t i = 0; i < attn_star.size(); ++i)
        require_same_shape(attn_star[i], attn_cur[i], "attention layer " + std::to_string(i));
    require_same_shape(feat_star, feat_cur, "features");
}

double self_attention_energy(const std::vector<Tensor>& attn_star, const std::vector<Tensor>& attn_cur) {
    require_same_layers(attn_star, attn_cur);
    double total = 0.0;
    for (std::size_t i = 0; i < attn_star.size(); ++i)
        total += mean_squared_difference(attn_star[i], attn_cur[i]);
    return total;
}

double feature_energy(const Tensor& feat_star, const Tensor& feat_cur) {
    return mean_squared_difference(feat_star, feat_cur);
}

std::vector<Tensor> self_attention_energy_grad(const std::vector<Tensor>& attn_star,
                                               const std::vector<Tensor>& attn_cur) {
    require_same_layers(attn_star, attn_cur);
    std::vector<Tensor> out;
    out.reserve(attn_cur.size());
    for (std::size_t i = 0; i < attn_cur.size(); ++i)
        out.push_back(mean_squared_difference_grad(attn_star[i], attn_cur[i]));
    return out;
}

Tensor feature_energy_grad(const Tensor& feat_star, const Tensor& feat_cur) {
    return mean_squared_difference_grad(feat_star, feat_cur);
}

GuidanceGradient guidance_gradient(const LatentState& z, const LatentState& z_star, const std::string& source_prompt,
                                   Denoiser& backend, const NoiseSchedule& schedule, double v_self, double v_feat) {
    if (z.t != z_star.t)
        throw ValidationError("z_star", "latents are not time-aligned (t=" + std::to_string(z.t) + " vs " +
                                            std::to_string(z_star.t) + ")");
    require_same_shape(z.data, z_star.data, "guidance latents");
    const int timestep = schedule.timestep(z.t);
    const Conditioning cond = Conditioning::text(source_prompt);

    NoisePrediction star = backend.predict_noise(z_star.data, timestep, cond, true);
    if (!star.internals)
        throw BackendError(backend.manifest().name, "backend does not expose internals");
    const DenoiserInternals& star_internals = *star.internals;

    GuidanceGradient out;
    InternalsPullback pull = backend.internals_pullback(
        z.data, timestep, cond, [&](const DenoiserInternals& cur) {
            DenoiserInternals d;
            d.self_attn_maps = self_attention_energy_grad(star_internals.self_attn_maps, cur.self_attn_maps);
            for (auto& m : d.self_attn_maps)
                m *= v_self;
            d.features = feature_energy_grad(star_internals.features, cur.features);
            d.features *= v_feat;
            return d;
        });
    out.g_self = self_attention_energy(star_internals.self_attn_maps, pull.internals.self_attn_maps);
    out.g_feat = feature_energy(star_internals.features, pull.internals.features);
    out.grad = std::move(pull.latent_grad);
    out.current = std::move(pull.internals);
    return out;
}

double rescale_factor(double r_cur, double r_lower, double r_upper) {
    if (!(r_lower > 0.0) || !(r_lower <= r_upper))
        throw ValidationError("r_lower", "rescale bounds must satisfy 0 < r_lower <= r_upper");
    if (std::isnan(r_cur))
        return r_upper;
    return std::clamp(r_cur, r_lower, r_upper);
}

RescaleState compute_rescale(const Tensor& delta_cfg, const Tensor& grad, double r_lower, double r_upper) {
    require_same_shape(delta_cfg, grad, "rescale");
    RescaleState s;
    const double grad_sq = squared_norm(grad);
    if (!(grad_sq > 0.0)) {
        s.r_cur = std::numeric_limits<double>::infinity();
        s.gamma = rescale_factor(s.r_cur, r_lower, r_upper);
        s.guidance_active = false;
        return s;
    }
    s.r_cur = squared_norm(delta_cfg) / grad_sq;
    s.gamma = rescale_factor(s.r_cur, r_lower, r_upper);
    return s;
}

Tensor classifier_free_guidance(const Tensor& eps_cond, const Tensor& eps_uncond, double w) {
    require_same_shape(eps_cond, eps_uncond, "classifier-free guidance");
    Tensor out(eps_cond.shape());
    // Anchored on the nearer endpoint so w = 0 and w = 1 reproduce their inputs exactly.
    if (w < 0.5) {
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = eps_uncond[i] + w * (eps_cond[i] - eps_uncond[i]);
    } else {
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = eps_cond[i] + (w - 1.0) * (eps_cond[i] - eps_uncond[i]);
    }
    return out;
}

bool guidance_window_open(int step_index, int tau_g) { return step_index < tau_g; }

Tensor combine_noise(const Tensor& eps_cond, const Tensor& eps_uncond, const Tensor& grad, double w, double gamma,
                     int step_index, int tau_g) {
    Tensor eps = classifier_free_guidance(eps_cond, eps_uncond, w);
    if (guidance_window_open(step_index, tau_g))
        axpy(gamma, grad, eps);
    return eps;
}

}  // namespace matfuse::guidance
