// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

// Serves the toy denoiser over the worker line protocol on stdin/stdout.

#include <iostream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "matfuse/denoiser/remote.hpp"
#include "matfuse/denoiser/toy_backend.hpp"

int main(int argc, char** argv) {
    CLI::App app{"matfuse toy denoiser worker"};
    std::uint64_t seed = 0;
    std::size_t size = matfuse::kDefaultImageSize;
    std::optional<double> constant;
    app.add_option("--seed", seed, "toy weight seed");
    app.add_option("--size", size, "square image size");
    app.add_option("--constant", constant, "constant noise prediction");
    std::string weights;
    app.add_option("--weights", weights, "ignored; accepted so the worker can stand in for the pretrained one");
    CLI11_PARSE(app, argc, argv);

    // stdout carries the protocol.
    spdlog::set_default_logger(spdlog::stderr_color_mt("worker"));
    std::ios::sync_with_stdio(false);
    auto backend = matfuse::make_toy_backend(seed, {size, size, constant});
    matfuse::serve_denoiser(*backend, std::cin, std::cout);
    return 0;
}
