// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>

#include <Eigen/Dense>

#include "matfuse/core/image.hpp"

namespace matfuse::conditioning {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// softmax(Q K^T / sqrt(d)) V with the row-stochastic probabilities kept for backprop.
struct AttentionResult {
    Matrix output;
    Matrix probs;
};

AttentionResult attention(const Matrix& queries, const Matrix& keys, const Matrix& values);

struct AttentionGrads {
    Matrix d_queries;
    Matrix d_keys;
    Matrix d_values;
};

/// Pullback of `attention`. `d_probs`, when given, is an extra cotangent on the
/// probability matrix itself (used when the map feeds an energy).
AttentionGrads attention_backward(const Matrix& queries, const Matrix& keys, const Matrix& values,
                                  const AttentionResult& forward, const Matrix& d_output,
                                  const Matrix* d_probs = nullptr);

/// Inputs to one decoupled cross-attention layer. Queries are already projected
/// (Q = Z W_q); text and image keys/values likewise.
struct AttentionInputs {
    Matrix queries;
    Matrix text_keys;
    Matrix text_values;
    Matrix image_keys;
    Matrix image_values;
    double lambda = 0.0;
    /// Per-query gate for the image term, one cell per query. nullopt disables gating.
    std::optional<BinaryMask> level_mask;

    void validate() const;
};

struct DecoupledAttentionResult {
    Matrix output;
    AttentionResult text;
    std::optional<AttentionResult> image;  // absent when lambda == 0 or the mask is empty
};

/// Z_new[q] = Attn(Q,K,V)[q] + lambda * m[q] * Attn(Q,K',V')[q].
/// Rows with lambda == 0 or m[q] == 0 are copied from the text branch unchanged.
Matrix decoupled_attention(const AttentionInputs& inputs);
DecoupledAttentionResult decoupled_attention_forward(const AttentionInputs& inputs);

/// Gradient of decoupled_attention w.r.t. the queries (keys/values are constants of z).
Matrix decoupled_attention_backward_queries(const AttentionInputs& inputs, const DecoupledAttentionResult& forward,
                                            const Matrix& d_output);

enum class LambdaScheduleKind { Constant, LinearRamp };

/// Step-dependent material transfer force. Constant by default; LinearRamp grows
/// from base/ramp_steps to base over the first `ramp_steps` steps.
struct LambdaSchedule {
    LambdaScheduleKind kind = LambdaScheduleKind::Constant;
    int ramp_steps = 0;
};

double lambda_schedule(double lambda_base, int step_index, const LambdaSchedule& schedule = {});

}  // namespace matfuse::conditioning
