// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>

namespace matfuse {

/// Incremental SHA-256, hex digest.
class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    Sha256& update(std::string_view bytes);
    Sha256& update(const void* data, std::size_t size);
    std::string hex_digest();

private:
    void* m_ctx;
};

std::string sha256_hex(std::string_view bytes);

}  // namespace matfuse
