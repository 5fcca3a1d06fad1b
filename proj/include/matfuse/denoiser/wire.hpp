// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>

#include <json.hpp>

#include "matfuse/denoiser/denoiser.hpp"

/// JSON encoding of denoiser requests for out-of-process backends.
/// Arrays are {"shape": [...], "dtype": "f64"|"f32"|"u8", "b64": "..."},
/// little-endian, row-major. Images are H x W x 3.
namespace matfuse::wire {

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

nlohmann::json encode(const Tensor& tensor);
nlohmann::json encode(const ImageRGB& image);
nlohmann::json encode(const BinaryMask& mask);
nlohmann::json encode(const Conditioning& cond);
nlohmann::json encode(const DenoiserInternals& internals);

Tensor decode_tensor(const nlohmann::json& doc);
ImageRGB decode_image(const nlohmann::json& doc);
BinaryMask decode_mask(const nlohmann::json& doc);
Conditioning decode_conditioning(const nlohmann::json& doc);
DenoiserInternals decode_internals(const nlohmann::json& doc);

/// {"ok": false, "kind": ..., "component": ..., "error": ...} for the current exception.
nlohmann::json error_reply(const std::exception& e);

/// Rethrows an error reply as the matching exception type.
[[noreturn]] void throw_reply(const nlohmann::json& reply);

}  // namespace matfuse::wire
