// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "matfuse/tensor.hpp"

namespace matfuse {

/// Latent z_t: C x h x w values tagged with trajectory index t in [0, T].
struct LatentState {
    Tensor data;
    int t = 0;

    friend bool operator==(const LatentState&, const LatentState&) = default;
};

/// DDIM inversion trajectory z*_0 .. z*_T. latents[t].t == t.
struct InversionTrajectory {
    std::vector<LatentState> latents;
    std::string source_prompt;

    int steps() const { return static_cast<int>(latents.size()) - 1; }
    const LatentState& at(int t) const { return latents.at(static_cast<std::size_t>(t)); }

    /// Length, index ordering and finiteness checks.
    void validate(int expected_steps) const;
};

struct PromptSet {
    std::string source;
    std::string target;
    std::string null_prompt;  // always empty

    void validate() const;
};

}  // namespace matfuse
