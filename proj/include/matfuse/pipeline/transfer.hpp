// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <vector>

#include <json.hpp>

#include "matfuse/conditioning/attention.hpp"
#include "matfuse/core/config.hpp"
#include "matfuse/core/image.hpp"
#include "matfuse/core/types.hpp"
#include "matfuse/denoiser/denoiser.hpp"
#include "matfuse/sampler/ddim.hpp"

namespace matfuse {

struct TransferRequest {
    ImageRGB x_init;
    BinaryMask object_mask;  // pixel space, same size as x_init
    ImageRGB y_im;           // material exemplar
    PromptSet prompts;
    TransferConfig config;

    void validate() const;
};

/// One row of the per-step guidance log.
struct StepRecord {
    int step = 0;       // T - t, 0-based
    int t = 0;          // trajectory index before the step
    int timestep = 0;   // native denoiser timestep
    double lambda = 0.0;
    bool guided = false;
    bool blended = false;
    double g_self = std::numeric_limits<double>::quiet_NaN();
    double g_feat = std::numeric_limits<double>::quiet_NaN();
    double r_cur = std::numeric_limits<double>::quiet_NaN();
    double gamma = std::numeric_limits<double>::quiet_NaN();
    std::size_t passes = 0;  // backend passes spent in this step
    double attn_entropy = std::numeric_limits<double>::quiet_NaN();  // mean row entropy, first recorded map
    double feat_rms = std::numeric_limits<double>::quiet_NaN();
};

std::string step_log_header();
std::string to_csv_line(const StepRecord& record);

struct TransferResult {
    ImageRGB x_edit;
    Tensor final_latent;
    std::vector<StepRecord> steps;
    TransferConfig config;
    nlohmann::json backend_manifest;
};

enum class TransferPhase { Inverting, Sampling };

/// Optional observers. All callbacks run on the sampling thread between steps.
struct TransferHooks {
    std::function<void(TransferPhase)> on_phase;
    std::function<void(const StepRecord&)> on_step;
    /// Called every `preview_every` steps with the decoded current latent.
    std::function<void(int step, const ImageRGB& preview)> on_preview;
    int preview_every = 10;
    /// Polled at every step boundary; returning true aborts with CancelledError.
    std::function<bool()> cancelled;
    conditioning::LambdaSchedule lambda_schedule;
    /// Unguided steps spend one extra y_src pass to log current-branch internals.
    bool log_internals = false;
};

/// Background freeze: mask * z + (1 - mask) * z_star, per channel.
LatentState blend_background(const LatentState& z, const LatentState& z_star, const BinaryMask& latent_mask);

/// The latent-resolution mask used for blending.
BinaryMask latent_mask_for(const BinaryMask& pixel_mask, const BackendManifest& manifest);

InversionTrajectory invert_request(const TransferRequest& request, Denoiser& backend);

/// Guided sampling from a precomputed inversion trajectory of request.x_init.
TransferResult material_transfer(const TransferRequest& request, Denoiser& backend,
                                 const InversionTrajectory& trajectory, const TransferHooks& hooks = {});

/// Inversion followed by guided sampling.
TransferResult material_transfer(const TransferRequest& request, Denoiser& backend, const TransferHooks& hooks = {});

/// One result per lambda, all sharing a single inversion.
std::vector<TransferResult> lambda_sweep(const TransferRequest& request, Denoiser& backend,
                                         const std::vector<double>& lambdas, const TransferHooks& hooks = {});
std::vector<TransferResult> lambda_sweep(const TransferRequest& request, Denoiser& backend,
                                         const InversionTrajectory& trajectory, const std::vector<double>& lambdas,
                                         const TransferHooks& hooks = {});

using BackendFactory = std::function<std::unique_ptr<Denoiser>()>;

/// Sweep over `workers` independent backend instances. Results are returned in
/// lambda order and match the sequential sweep bit for bit.
std::vector<TransferResult> lambda_sweep_parallel(const TransferRequest& request, const BackendFactory& factory,
                                                  const InversionTrajectory& trajectory,
                                                  const std::vector<double>& lambdas, int workers);

}  // namespace matfuse
