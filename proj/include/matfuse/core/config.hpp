// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace matfuse {

/// Scalar knobs of one material transfer run. Defaults reproduce the reference
/// configuration (w=7.5, tau_g=30, tau_m=40, v_self=7e5, v_feat=1500, r in [0.33, 3], T=50).
struct TransferConfig {
    double w = 7.5;              // classifier-free guidance scale
    double lam = 0.8;            // material transfer force
    double v_self = 700000.0;    // self-attention guider scale
    double v_feat = 1500.0;      // feature guider scale
    int tau_g = 30;              // guidance applied while (T - t) < tau_g
    int tau_m = 40;              // background blending applied while (T - t) < tau_m
    double r_lower = 0.33;
    double r_upper = 3.0;
    int T = 50;                  // DDIM steps
    std::int64_t seed = 0;

    /// Throws ValidationError naming the first violated field.
    void validate() const;

    friend bool operator==(const TransferConfig&, const TransferConfig&) = default;
};

/// Field names accepted by make_config, in declaration order.
const std::vector<std::string>& config_keys();

/// Defaults overlaid with `overrides` (a flat JSON object). Unknown keys and
/// bound violations raise ValidationError.
TransferConfig make_config(const nlohmann::json& overrides = nlohmann::json::object());

nlohmann::json to_json(const TransferConfig& config);

TransferConfig load_config_file(const std::filesystem::path& path);
void save_config_file(const TransferConfig& config, const std::filesystem::path& path);

}  // namespace matfuse
