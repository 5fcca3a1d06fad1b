// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "matfuse/conditioning/attention.hpp"

#include <algorithm>
#include <cmath>

#include "matfuse/errors.hpp"

namespace matfuse::conditioning {

namespace {

std::string dims(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

bool row_gated_on(const AttentionInputs& in, Eigen::Index q) {
    return !in.level_mask || (*in.level_mask)[static_cast<std::size_t>(q)] != 0;
}

bool image_term_active(const AttentionInputs& in) {
    return in.lambda != 0.0 && (!in.level_mask || in.level_mask->any());
}

}  // namespace

AttentionResult attention(const Matrix& queries, const Matrix& keys, const Matrix& values) {
    if (queries.cols() != keys.cols())
        throw ShapeError("attention: query dim " + dims(queries) + " vs key dim " + dims(keys));
    if (keys.rows() != values.rows())
        throw ShapeError("attention: " + dims(keys) + " keys vs " + dims(values) + " values");
    const double scale = 1.0 / std::sqrt(static_cast<double>(queries.cols()));
    AttentionResult r;
    r.probs = (queries * keys.transpose()) * scale;
    for (Eigen::Index i = 0; i < r.probs.rows(); ++i) {
        auto row = r.probs.row(i);
        const double peak = row.maxCoeff();
        row = (row.array() - peak).exp();
        row /= row.sum();
    }
    r.output = r.probs * values;
    return r;
}

AttentionGrads attention_backward(const Matrix& queries, const Matrix& keys, const Matrix& values,
                                  const AttentionResult& forward, const Matrix& d_output, const Matrix* d_probs) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(queries.cols()));
    AttentionGrads g;
    g.d_values = forward.probs.transpose() * d_output;
    Matrix dp = d_output * values.transpose();
    if (d_probs)
        dp += *d_probs;
    // softmax pullback, row by row: dL = P * (dP - <dP, P>)
    Matrix dl(dp.rows(), dp.cols());
    for (Eigen::Index i = 0; i < dp.rows(); ++i) {
        const double inner = dp.row(i).dot(forward.probs.row(i));
        dl.row(i) = forward.probs.row(i).array() * (dp.row(i).array() - inner);
    }
    g.d_queries = (dl * keys) * scale;
    g.d_keys = (dl.transpose() * queries) * scale;
    return g;
}

void AttentionInputs::validate() const {
    if (text_keys.cols() != queries.cols())
        throw ShapeError("decoupled attention: text keys " + dims(text_keys) + " vs queries " + dims(queries));
    if (text_keys.rows() != text_values.rows())
        throw ShapeError("decoupled attention: text keys " + dims(text_keys) + " vs values " + dims(text_values));
    if (image_keys.cols() != queries.cols())
        throw ShapeError("decoupled attention: image keys " + dims(image_keys) + " vs queries " + dims(queries));
    if (image_keys.rows() != image_values.rows())
        throw ShapeError("decoupled attention: image keys " + dims(image_keys) + " vs values " +
                         dims(image_values));
    if (image_values.cols() != text_values.cols())
        throw ShapeError("decoupled attention: image value dim differs from text value dim");
    if (level_mask && level_mask->size() != static_cast<std::size_t>(queries.rows()))
        throw ShapeError("decoupled attention: mask has " + std::to_string(level_mask->size()) + " cells for " +
                         std::to_string(queries.rows()) + " queries");
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw ValidationError("lam", "must be >= 0");
}

DecoupledAttentionResult decoupled_attention_forward(const AttentionInputs& in) {
    in.validate();
    DecoupledAttentionResult r;
    r.text = attention(in.queries, in.text_keys, in.text_values);
    r.output = r.text.output;
    if (!image_term_active(in))
        return r;
    r.image = attention(in.queries, in.image_keys, in.image_values);
    for (Eigen::Index q = 0; q < r.output.rows(); ++q) {
        if (row_gated_on(in, q))
            r.output.row(q) += in.lambda * r.image->output.row(q);
    }
    return r;
}

Matrix decoupled_attention(const AttentionInputs& inputs) { return decoupled_attention_forward(inputs).output; }

Matrix decoupled_attention_backward_queries(const AttentionInputs& in, const DecoupledAttentionResult& forward,
                                            const Matrix& d_output) {
    Matrix dq = attention_backward(in.queries, in.text_keys, in.text_values, forward.text, d_output).d_queries;
    if (!forward.image)
        return dq;
    Matrix d_image = Matrix::Zero(d_output.rows(), d_output.cols());
    for (Eigen::Index q = 0; q < d_output.rows(); ++q) {
        if (row_gated_on(in, q))
            d_image.row(q) = in.lambda * d_output.row(q);
    }
    dq += attention_backward(in.queries, in.image_keys, in.image_values, *forward.image, d_image).d_queries;
    return dq;
}

double lambda_schedule(double lambda_base, int step_index, const LambdaSchedule& schedule) {
    if (!(lambda_base >= 0.0))
        throw ValidationError("lam", "must be >= 0");
    if (schedule.kind == LambdaScheduleKind::Constant || schedule.ramp_steps <= 0)
        return lambda_base;
    const double frac = std::min(1.0, static_cast<double>(std::max(step_index, 0) + 1) / schedule.ramp_steps);
    return lambda_base * frac;
}

}  // namespace matfuse::conditioning
