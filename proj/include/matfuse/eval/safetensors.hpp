// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace matfuse::eval {

/// A float32 tensor read from or written to a safetensors file.
struct NamedTensor {
    std::vector<std::int64_t> shape;
    std::vector<float> values;

    std::int64_t numel() const;
};

using TensorMap = std::map<std::string, NamedTensor>;

/// Reads every tensor of a safetensors file. F32, F16 and BF16 payloads are
/// converted to float. Throws IoError on malformed input.
TensorMap read_safetensors(const std::filesystem::path& path);

/// Writes all tensors as F32, keys in lexicographic order.
void write_safetensors(const TensorMap& tensors, const std::filesystem::path& path);

}  // namespace matfuse::eval
