// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "matfuse/pipeline/transfer.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "matfuse/core/mask.hpp"
#include "matfuse/errors.hpp"
#include "matfuse/guidance/guidance.hpp"

namespace matfuse {

namespace {

double mean_row_entropy(const Tensor& map) {
    if (map.rank() != 2 || map.empty())
        return std::numeric_limits<double>::quiet_NaN();
    const std::size_t rows = map.dim(0), cols = map.dim(1);
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        double h = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            const double p = map[r * cols + c];
            if (p > 0.0)
                h -= p * std::log(p);
        }
        total += h;
    }
    return total / static_cast<double>(rows);
}

void summarize_internals(const DenoiserInternals& internals, StepRecord& rec) {
    if (!internals.self_attn_maps.empty())
        rec.attn_entropy = mean_row_entropy(internals.self_attn_maps.front());
    if (!internals.features.empty())
        rec.feat_rms = std::sqrt(squared_norm(internals.features) / static_cast<double>(internals.features.size()));
}

std::string fmt_real(double v) {
    if (std::isnan(v))
        return "";
    return fmt::format("{:.10g}", v);
}

}  // namespace

void TransferRequest::validate() const {
    x_init.validate();
    try {
        y_im.validate_range();
    } catch (const ValidationError& e) {
        throw ValidationError("material", e.what());
    }
    prompts.validate();
    config.validate();
    if (object_mask.height() != x_init.height() || object_mask.width() != x_init.width())
        throw ValidationError("mask", "mask is " + std::to_string(object_mask.height()) + "x" +
                                          std::to_string(object_mask.width()) + " but the image is " +
                                          std::to_string(x_init.height()) + "x" + std::to_string(x_init.width()));
    require_nonempty(object_mask, "mask");
}

std::string step_log_header() {
    return "step,g_self,g_feat,r_cur,gamma,t,timestep,lambda,guided,blended,passes,attn_entropy,feat_rms";
}

std::string to_csv_line(const StepRecord& r) {
    return fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{}", r.step, fmt_real(r.g_self), fmt_real(r.g_feat),
                       fmt_real(r.r_cur), fmt_real(r.gamma), r.t, r.timestep, fmt_real(r.lambda), r.guided ? 1 : 0,
                       r.blended ? 1 : 0, r.passes, fmt_real(r.attn_entropy), fmt_real(r.feat_rms));
}

LatentState blend_background(const LatentState& z, const LatentState& z_star, const BinaryMask& latent_mask) {
    if (z.t != z_star.t)
        throw ValidationError("z_star", "timestep mismatch in background blend (t=" + std::to_string(z.t) + " vs " +
                                            std::to_string(z_star.t) + ")");
    require_same_shape(z.data, z_star.data, "background blend");
    if (z.data.rank() != 3 || latent_mask.height() != z.data.dim(1) || latent_mask.width() != z.data.dim(2))
        throw ShapeError("background blend: mask " + std::to_string(latent_mask.height()) + "x" +
                         std::to_string(latent_mask.width()) + " vs latent " + shape_to_string(z.data.shape()));
    LatentState out{Tensor(z.data.shape()), z.t};
    const std::size_t hw = latent_mask.size();
    for (std::size_t c = 0; c < z.data.dim(0); ++c)
        for (std::size_t p = 0; p < hw; ++p) {
            const std::size_t i = c * hw + p;
            out.data[i] = latent_mask[p] ? z.data[i] : z_star.data[i];
        }
    return out;
}

BinaryMask latent_mask_for(const BinaryMask& pixel_mask, const BackendManifest& manifest) {
    return downsample_mask(pixel_mask, {manifest.latent_height, manifest.latent_width}, {MaskSpace::Latent, 0});
}

InversionTrajectory invert_request(const TransferRequest& request, Denoiser& backend) {
    request.validate();
    return ddim_invert(request.x_init, request.prompts.source, backend, NoiseSchedule(request.config.T));
}

TransferResult material_transfer(const TransferRequest& request, Denoiser& backend,
                                 const InversionTrajectory& trajectory, const TransferHooks& hooks) {
    request.validate();
    const TransferConfig& cfg = request.config;
    const BackendManifest& manifest = backend.manifest();
    if (request.x_init.height() != manifest.image_height || request.x_init.width() != manifest.image_width)
        throw ShapeError("image is " + std::to_string(request.x_init.height()) + "x" +
                         std::to_string(request.x_init.width()) + ", backend expects " +
                         std::to_string(manifest.image_height) + "x" + std::to_string(manifest.image_width));
    trajectory.validate(cfg.T);
    if (trajectory.source_prompt != request.prompts.source)
        throw ValidationError("trajectory", "trajectory was inverted under a different source prompt");

    const NoiseSchedule schedule(cfg.T);
    const BinaryMask latent_mask = latent_mask_for(request.object_mask, manifest);
    const std::vector<BinaryMask> pyramid = mask_pyramid(request.object_mask, manifest.cross_attention_grids);
    const MaterialEmbedding material = backend.embed_material(request.y_im);
    const Conditioning uncond = Conditioning::null();
    const Conditioning source = Conditioning::text(request.prompts.source);

    if (hooks.on_phase)
        hooks.on_phase(TransferPhase::Sampling);

    TransferResult result;
    result.config = cfg;
    result.backend_manifest = to_json(manifest);
    result.steps.reserve(static_cast<std::size_t>(cfg.T));

    LatentState z = trajectory.at(cfg.T);
    for (int t = cfg.T; t >= 1; --t) {
        const int step = cfg.T - t;
        if (hooks.cancelled && hooks.cancelled())
            throw CancelledError(step);

        const std::size_t passes_before = backend.pass_count();
        StepRecord rec;
        rec.step = step;
        rec.t = t;
        rec.timestep = schedule.timestep(t);
        rec.lambda = conditioning::lambda_schedule(cfg.lam, step, hooks.lambda_schedule);

        const Conditioning target =
            Conditioning::text_image(request.prompts.target, material, rec.lambda, pyramid);
        const Tensor eps_cond = backend.predict_noise(z.data, rec.timestep, target, false).noise;
        const Tensor eps_uncond = backend.predict_noise(z.data, rec.timestep, uncond, false).noise;

        Tensor eps_final;
        rec.guided = guidance::guidance_window_open(step, cfg.tau_g);
        if (rec.guided) {
            const guidance::GuidanceGradient gg = guidance::guidance_gradient(
                z, trajectory.at(t), request.prompts.source, backend, schedule, cfg.v_self, cfg.v_feat);
            Tensor delta_cfg = eps_cond - eps_uncond;
            delta_cfg *= cfg.w;
            const guidance::RescaleState rescale =
                guidance::compute_rescale(delta_cfg, gg.grad, cfg.r_lower, cfg.r_upper);
            rec.g_self = gg.g_self;
            rec.g_feat = gg.g_feat;
            rec.r_cur = rescale.r_cur;
            rec.gamma = rescale.gamma;
            summarize_internals(gg.current, rec);
            eps_final = guidance::combine_noise(eps_cond, eps_uncond, gg.grad, cfg.w, rescale.gamma, step, cfg.tau_g);
        } else {
            eps_final = guidance::combine_noise(eps_cond, eps_uncond, Tensor(), cfg.w, 0.0, step, cfg.tau_g);
            if (hooks.log_internals) {
                const NoisePrediction cur = backend.predict_noise(z.data, rec.timestep, source, true);
                summarize_internals(*cur.internals, rec);
            }
        }

        z = ddim_step(z, eps_final, schedule);
        rec.blended = step < cfg.tau_m;
        if (rec.blended)
            z = blend_background(z, trajectory.at(t - 1), latent_mask);
        if (!all_finite(z.data))
            throw NumericError(step, "non-finite latent after sampling step " + std::to_string(step) + " (t=" +
                                         std::to_string(t) + ")");

        rec.passes = backend.pass_count() - passes_before;
        if (hooks.on_step)
            hooks.on_step(rec);
        result.steps.push_back(rec);

        if (hooks.on_preview && hooks.preview_every > 0 && (step + 1) % hooks.preview_every == 0 && t > 1)
            hooks.on_preview(step + 1, backend.decode(z.data));
    }

    result.final_latent = z.data;
    result.x_edit = backend.decode(z.data);
    return result;
}

TransferResult material_transfer(const TransferRequest& request, Denoiser& backend, const TransferHooks& hooks) {
    if (hooks.on_phase)
        hooks.on_phase(TransferPhase::Inverting);
    const InversionTrajectory trajectory = invert_request(request, backend);
    return material_transfer(request, backend, trajectory, hooks);
}

std::vector<TransferResult> lambda_sweep(const TransferRequest& request, Denoiser& backend,
                                         const InversionTrajectory& trajectory, const std::vector<double>& lambdas,
                                         const TransferHooks& hooks) {
    if (lambdas.empty())
        throw ValidationError("lambdas", "lambda list is empty");
    std::vector<TransferResult> results;
    results.reserve(lambdas.size());
    for (double lam : lambdas) {
        TransferRequest item = request;
        item.config.lam = lam;
        results.push_back(material_transfer(item, backend, trajectory, hooks));
    }
    return results;
}

std::vector<TransferResult> lambda_sweep(const TransferRequest& request, Denoiser& backend,
                                         const std::vector<double>& lambdas, const TransferHooks& hooks) {
    if (lambdas.empty())
        throw ValidationError("lambdas", "lambda list is empty");
    if (hooks.on_phase)
        hooks.on_phase(TransferPhase::Inverting);
    const InversionTrajectory trajectory = invert_request(request, backend);
    return lambda_sweep(request, backend, trajectory, lambdas, hooks);
}

std::vector<TransferResult> lambda_sweep_parallel(const TransferRequest& request, const BackendFactory& factory,
                                                  const InversionTrajectory& trajectory,
                                                  const std::vector<double>& lambdas, int workers) {
    if (lambdas.empty())
        throw ValidationError("lambdas", "lambda list is empty");
    const std::size_t n = lambdas.size();
    const std::size_t pool = std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), n));

    std::vector<TransferResult> results(n);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < pool; ++w) {
        threads.emplace_back([&] {
            try {
                std::unique_ptr<Denoiser> backend = factory();
                for (std::size_t i = next++; i < n; i = next++) {
                    TransferRequest item = request;
                    item.config.lam = lambdas[i];
                    results[i] = material_transfer(item, *backend, trajectory);
                }
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure)
                    failure = std::current_exception();
                next = n;
            }
        });
    }
    for (auto& th : threads)
        th.join();
    if (failure)
        std::rethrow_exception(failure);
    return results;
}

}  // namespace matfuse
