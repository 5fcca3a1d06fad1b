// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace matfuse::cli {

enum ExitCode : int {
    kExitOk = 0,
    kExitInternal = 1,
    kExitUsage = 2,    // invalid or missing arguments, unreadable inputs, refused overwrite
    kExitBackend = 3,  // backend or perceptual weights failed to load
    kExitRuntime = 4,  // aborted while running (numeric failure, worker crash, interrupt)
};

/// Runs one invocation. `args` excludes the program name. Machine-readable
/// lines on `out` start with "RESULT ".
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace matfuse::cli
