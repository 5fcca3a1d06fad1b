// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "matfuse/core/config.hpp"

#include <cmath>
#include <fstream>

#include "matfuse/errors.hpp"

namespace matfuse {

namespace {

constexpr int kMaxSteps = 1000;

double read_real(const nlohmann::json& value, const std::string& key) {
    if (!value.is_number())
        throw ValidationError(key, "expected a number");
    const double v = value.get<double>();
    if (!std::isfinite(v))
        throw ValidationError(key, "must be finite");
    return v;
}

std::int64_t read_integer(const nlohmann::json& value, const std::string& key) {
    if (value.is_number_integer())
        return value.get<std::int64_t>();
    if (value.is_number_float()) {
        const double v = value.get<double>();
        if (std::isfinite(v) && std::floor(v) == v)
            return static_cast<std::int64_t>(v);
    }
    throw ValidationError(key, "expected an integer");
}

}  // namespace

void TransferConfig::validate() const {
    if (T < 1 || T > kMaxSteps)
        throw ValidationError("T", "must be in [1, " + std::to_string(kMaxSteps) + "]");
    if (!std::isfinite(w))
        throw ValidationError("w", "must be finite");
    if (!(lam >= 0.0) || !std::isfinite(lam))
        throw ValidationError("lam", "must be >= 0");
    if (!(v_self >= 0.0) || !std::isfinite(v_self))
        throw ValidationError("v_self", "must be >= 0");
    if (!(v_feat >= 0.0) || !std::isfinite(v_feat))
        throw ValidationError("v_feat", "must be >= 0");
    if (tau_g < 0 || tau_g > T)
        throw ValidationError("tau_g", "must be in [0, T]");
    if (tau_m < 0 || tau_m > T)
        throw ValidationError("tau_m", "must be in [0, T]");
    if (!(r_lower > 0.0) || !std::isfinite(r_lower))
        throw ValidationError("r_lower", "must be > 0");
    if (!std::isfinite(r_upper))
        throw ValidationError("r_upper", "must be finite");
    if (r_lower > r_upper)
        throw ValidationError("r_lower", "must not exceed r_upper");
}

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = {"w",     "lam",     "v_self",  "v_feat", "tau_g",
                                                  "tau_m", "r_lower", "r_upper", "T",      "seed"};
    return keys;
}

TransferConfig make_config(const nlohmann::json& overrides) {
    if (overrides.is_null())
        return make_config(nlohmann::json::object());
    if (!overrides.is_object())
        throw ValidationError("", "config overrides must be a key/value object");
    TransferConfig config;
    for (const auto& [key, value] : overrides.items()) {
        if (key == "w")
            config.w = read_real(value, key);
        else if (key == "lam")
            config.lam = read_real(value, key);
        else if (key == "v_self")
            config.v_self = read_real(value, key);
        else if (key == "v_feat")
            config.v_feat = read_real(value, key);
        else if (key == "tau_g")
            config.tau_g = static_cast<int>(read_integer(value, key));
        else if (key == "tau_m")
            config.tau_m = static_cast<int>(read_integer(value, key));
        else if (key == "r_lower")
            config.r_lower = read_real(value, key);
        else if (key == "r_upper")
            config.r_upper = read_real(value, key);
        else if (key == "T")
            config.T = static_cast<int>(read_integer(value, key));
        else if (key == "seed")
            config.seed = read_integer(value, key);
        else
            throw ValidationError(key, "unknown config key");
    }
    config.validate();
    return config;
}

nlohmann::json to_json(const TransferConfig& config) {
    return nlohmann::json{{"w", config.w},         {"lam", config.lam},         {"v_self", config.v_self},
                          {"v_feat", config.v_feat}, {"tau_g", config.tau_g},     {"tau_m", config.tau_m},
                          {"r_lower", config.r_lower}, {"r_upper", config.r_upper}, {"T", config.T},
                          {"seed", config.seed}};
}

TransferConfig load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open config file " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("", "config file " + path.string() + " is not valid JSON: " + e.what());
    }
    return make_config(doc);
}

void save_config_file(const TransferConfig& config, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write config file " + path.string());
    out << to_json(config).dump(2) << "\n";
}

}  // namespace matfuse
