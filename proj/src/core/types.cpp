// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "matfuse/core/types.hpp"

#include "matfuse/errors.hpp"

namespace matfuse {

void InversionTrajectory::validate(int expected_steps) const {
    if (static_cast<int>(latents.size()) != expected_steps + 1)
        throw ValidationError("trajectory", "expected " + std::to_string(expected_steps + 1) + " latents, found " +
                                                std::to_string(latents.size()));
    for (std::size_t i = 0; i < latents.size(); ++i) {
        if (latents[i].t != static_cast<int>(i))
            throw ValidationError("trajectory", "latent " + std::to_string(i) + " carries index " +
                                                    std::to_string(latents[i].t));
        if (!all_finite(latents[i].data))
            throw ValidationError("trajectory", "latent " + std::to_string(i) + " is not finite");
        if (!latents[i].data.same_shape(latents[0].data))
            throw ValidationError("trajectory", "latent shapes differ along the trajectory");
    }
}

void PromptSet::validate() const {
    if (source.empty())
        throw ValidationError("src_prompt", "source prompt must not be empty");
    if (!null_prompt.empty())
        throw ValidationError("null_prompt", "null prompt must be empty");
}

}  // namespace matfuse
