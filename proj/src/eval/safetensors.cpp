// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "matfuse/eval/safetensors.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "matfuse/errors.hpp"

namespace matfuse::eval {

namespace {

static_assert(std::endian::native == std::endian::little, "safetensors payloads are little endian");

float half_to_float(std::uint16_t h) {
    const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
    std::uint32_t exp = (h >> 10) & 0x1fu;
    std::uint32_t mant = h & 0x3ffu;
    std::uint32_t bits;
    if (exp == 0) {
        if (mant == 0) {
            bits = sign;
        } else {
            exp = 127 - 15 + 1;
            while (!(mant & 0x400u)) {
                mant <<= 1;
                --exp;
            }
            bits = sign | (exp << 23) | ((mant & 0x3ffu) << 13);
        }
    } else if (exp == 0x1f) {
        bits = sign | 0x7f800000u | (mant << 13);
    } else {
        bits = sign | ((exp + 127 - 15) << 23) | (mant << 13);
    }
    return std::bit_cast<float>(bits);
}

float bf16_to_float(std::uint16_t b) { return std::bit_cast<float>(static_cast<std::uint32_t>(b) << 16); }

}  // namespace

std::int64_t NamedTensor::numel() const {
    std::int64_t n = 1;
    for (auto d : shape)
        n *= d;
    return n;
}

TensorMap read_safetensors(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::uint64_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), 8);
    if (!in || header_len == 0 || header_len > (100u << 20))
        throw IoError(path.string() + ": not a safetensors file");
    std::string header(header_len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(header_len));
    if (!in)
        throw IoError(path.string() + ": truncated header");
    const std::vector<char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path.string() + ": bad header: " + e.what());
    }

    TensorMap out;
    for (const auto& [name, info] : doc.items()) {
        if (name == "__metadata__")
            continue;
        NamedTensor t;
        const std::string dtype = info.at("dtype").get<std::string>();
        t.shape = info.at("shape").get<std::vector<std::int64_t>>();
        const auto offsets = info.at("data_offsets").get<std::vector<std::uint64_t>>();
        if (offsets.size() != 2 || offsets[1] < offsets[0] || offsets[1] > payload.size())
            throw IoError(path.string() + ": bad offsets for " + name);
        const char* src = payload.data() + offsets[0];
        const std::uint64_t bytes = offsets[1] - offsets[0];
        const auto n = static_cast<std::uint64_t>(t.numel());
        t.values.resize(n);
        if (dtype == "F32" && bytes == n * 4) {
            std::memcpy(t.values.data(), src, bytes);
        } else if ((dtype == "F16" || dtype == "BF16") && bytes == n * 2) {
            for (std::uint64_t i = 0; i < n; ++i) {
                std::uint16_t h;
                std::memcpy(&h, src + 2 * i, 2);
                t.values[i] = dtype == "F16" ? half_to_float(h) : bf16_to_float(h);
            }
        } else {
            throw IoError(path.string() + ": unsupported dtype or size for " + name + " (" + dtype + ")");
        }
        out.emplace(name, std::move(t));
    }
    return out;
}

void write_safetensors(const TensorMap& tensors, const std::filesystem::path& path) {
    nlohmann::json header = nlohmann::json::object();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : tensors) {
        if (static_cast<std::int64_t>(t.values.size()) != t.numel())
            throw ValidationError(name, "value count does not match shape");
        const std::uint64_t bytes = t.values.size() * 4;
        header[name] = {{"dtype", "F32"}, {"shape", t.shape}, {"data_offsets", {offset, offset + bytes}}};
        offset += bytes;
    }
    std::string text = header.dump();
    while ((text.size() + 8) % 8)
        text.push_back(' ');
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot write " + path.string());
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), 8);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : tensors)
        out.write(reinterpret_cast<const char*>(t.values.data()), static_cast<std::streamsize>(t.values.size() * 4));
    if (!out)
        throw IoError("short write to " + path.string());
}

}  // namespace matfuse::eval
