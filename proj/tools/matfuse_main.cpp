// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "cli/cli.hpp"

int main(int argc, char** argv) {
    // stdout is reserved for RESULT lines.
    spdlog::set_default_logger(spdlog::stderr_color_mt("matfuse"));
    return matfuse::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
