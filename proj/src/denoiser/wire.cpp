// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "matfuse/denoiser/wire.hpp"

#include <bit>
#include <cstring>

#include <openssl/evp.h>

#include "matfuse/errors.hpp"

namespace matfuse::wire {

static_assert(std::endian::native == std::endian::little, "wire format assumes a little-endian host");

using nlohmann::json;

std::string base64_encode(std::string_view bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::string base64_decode(std::string_view text) {
    if (text.size() % 4 != 0)
        throw BackendError("wire", "base64 length is not a multiple of 4");
    std::string out(3 * text.size() / 4, '\0');
    const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(text.data()), static_cast<int>(text.size()));
    if (n < 0)
        throw BackendError("wire", "invalid base64 payload");
    std::size_t pad = 0;
    if (!text.empty() && text.back() == '=')
        pad = text.size() >= 2 && text[text.size() - 2] == '=' ? 2 : 1;
    out.resize(static_cast<std::size_t>(n) - pad);
    return out;
}

namespace {

json array_doc(const Shape& shape, const char* dtype, const void* data, std::size_t bytes) {
    return {{"shape", shape}, {"dtype", dtype}, {"b64", base64_encode({static_cast<const char*>(data), bytes})}};
}

/// Decoded values as doubles, plus the shape.
std::pair<Shape, std::vector<double>> read_array(const json& doc) {
    try {
        Shape shape = doc.at("shape").get<Shape>();
        const std::string dtype = doc.at("dtype").get<std::string>();
        const std::string raw = base64_decode(doc.at("b64").get<std::string>());
        const std::size_t n = shape_numel(shape);
        std::vector<double> values(n);
        if (dtype == "f64") {
            if (raw.size() != n * 8)
                throw BackendError("wire", "f64 payload size mismatch");
            std::memcpy(values.data(), raw.data(), raw.size());
        } else if (dtype == "f32") {
            if (raw.size() != n * 4)
                throw BackendError("wire", "f32 payload size mismatch");
            for (std::size_t i = 0; i < n; ++i) {
                float f;
                std::memcpy(&f, raw.data() + 4 * i, 4);
                values[i] = f;
            }
        } else if (dtype == "u8") {
            if (raw.size() != n)
                throw BackendError("wire", "u8 payload size mismatch");
            for (std::size_t i = 0; i < n; ++i)
                values[i] = static_cast<unsigned char>(raw[i]);
        } else {
            throw BackendError("wire", "unsupported dtype " + dtype);
        }
        return {std::move(shape), std::move(values)};
    } catch (const json::exception& e) {
        throw BackendError("wire", std::string("malformed array: ") + e.what());
    }
}

std::string mode_name(ConditioningMode m) {
    switch (m) {
        case ConditioningMode::Null:
            return "null";
        case ConditioningMode::Text:
            return "text";
        case ConditioningMode::TextImage:
            return "text_image";
    }
    return "null";
}

}  // namespace

json encode(const Tensor& t) { return array_doc(t.shape(), "f64", t.data(), t.size() * sizeof(double)); }

json encode(const ImageRGB& image) {
    return array_doc({image.height(), image.width(), 3}, "f64", image.pixels().data(),
                     image.pixels().size() * sizeof(double));
}

json encode(const BinaryMask& mask) {
    return array_doc({mask.height(), mask.width()}, "u8", mask.values().data(), mask.size());
}

json encode(const Conditioning& cond) {
    json doc = {{"mode", mode_name(cond.mode)}, {"prompt", cond.prompt}};
    if (cond.mode == ConditioningMode::TextImage) {
        doc["image_tokens"] = encode(cond.image.tokens);
        doc["lambda"] = cond.lambda;
        json masks = json::array();
        for (const auto& m : cond.mask_pyramid)
            masks.push_back(encode(m));
        doc["mask_pyramid"] = masks;
    }
    return doc;
}

json encode(const DenoiserInternals& internals) {
    json maps = json::array();
    for (const auto& m : internals.self_attn_maps)
        maps.push_back(encode(m));
    return {{"self_attn_maps", maps}, {"features", encode(internals.features)}};
}

Tensor decode_tensor(const json& doc) {
    auto [shape, values] = read_array(doc);
    return Tensor(std::move(shape), std::move(values));
}

ImageRGB decode_image(const json& doc) {
    auto [shape, values] = read_array(doc);
    if (shape.size() != 3 || shape[2] != 3)
        throw BackendError("wire", "image must be H x W x 3");
    return ImageRGB(shape[0], shape[1], std::move(values));
}

BinaryMask decode_mask(const json& doc) {
    auto [shape, values] = read_array(doc);
    if (shape.size() != 2)
        throw BackendError("wire", "mask must be H x W");
    std::vector<std::uint8_t> bits(values.begin(), values.end());
    return BinaryMask(shape[0], shape[1], std::move(bits));
}

Conditioning decode_conditioning(const json& doc) {
    try {
        const std::string mode = doc.at("mode").get<std::string>();
        const std::string prompt = doc.value("prompt", "");
        if (mode == "null")
            return Conditioning::null();
        if (mode == "text")
            return Conditioning::text(prompt);
        if (mode != "text_image")
            throw BackendError("wire", "unknown conditioning mode " + mode);
        std::vector<BinaryMask> masks;
        for (const auto& m : doc.at("mask_pyramid"))
            masks.push_back(decode_mask(m));
        return Conditioning::text_image(prompt, MaterialEmbedding{decode_tensor(doc.at("image_tokens"))},
                                        doc.at("lambda").get<double>(), std::move(masks));
    } catch (const json::exception& e) {
        throw BackendError("wire", std::string("malformed conditioning: ") + e.what());
    }
}

DenoiserInternals decode_internals(const json& doc) {
    try {
        DenoiserInternals out;
        for (const auto& m : doc.at("self_attn_maps"))
            out.self_attn_maps.push_back(decode_tensor(m));
        out.features = decode_tensor(doc.at("features"));
        return out;
    } catch (const json::exception& e) {
        throw BackendError("wire", std::string("malformed internals: ") + e.what());
    }
}

json error_reply(const std::exception& e) {
    json reply = {{"ok", false}, {"error", e.what()}, {"kind", "backend"}, {"component", "worker"}};
    if (const auto* v = dynamic_cast<const ValidationError*>(&e)) {
        reply["kind"] = "validation";
        reply["component"] = v->field();
        // what() already carries the "field: " prefix.
        const std::string prefix = v->field() + ": ";
        std::string msg = e.what();
        if (!v->field().empty() && msg.rfind(prefix, 0) == 0)
            reply["error"] = msg.substr(prefix.size());
    } else if (dynamic_cast<const ShapeError*>(&e)) {
        reply["kind"] = "shape";
    } else if (const auto* b = dynamic_cast<const BackendError*>(&e)) {
        reply["component"] = b->component();
    }
    return reply;
}

void throw_reply(const json& reply) {
    const std::string kind = reply.value("kind", "backend");
    const std::string component = reply.value("component", "worker");
    const std::string error = reply.value("error", "worker error");
    if (kind == "validation")
        throw ValidationError(component, error);
    if (kind == "shape")
        throw ShapeError(error);
    throw BackendError(component, error);
}

}  // namespace matfuse::wire
