// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "matfuse/eval/lpips.hpp"

#include <cmath>
#include <cstdlib>

#include <Eigen/Dense>

#include "matfuse/errors.hpp"

namespace matfuse::eval {

namespace {

using MatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct LayerSpec {
    const char* key;
    std::size_t out, in, kernel, stride, pad;
};

// torchvision AlexNet feature convolutions.
constexpr LayerSpec kSpecs[Lpips::kLayers] = {
    {"features.0", 64, 3, 11, 4, 2},
    {"features.3", 192, 64, 5, 1, 2},
    {"features.6", 384, 192, 3, 1, 1},
    {"features.8", 256, 384, 3, 1, 1},
    {"features.10", 256, 256, 3, 1, 1},
};

constexpr float kShift[3] = {-0.030f, -0.088f, -0.188f};
constexpr float kScale[3] = {0.458f, 0.448f, 0.450f};

const NamedTensor& require(const TensorMap& weights, const std::string& key, std::int64_t numel) {
    const auto it = weights.find(key);
    if (it == weights.end())
        throw BackendError("lpips", "perceptual weights missing tensor " + key);
    if (it->second.numel() != numel || static_cast<std::int64_t>(it->second.values.size()) != numel)
        throw BackendError("lpips", "perceptual weight " + key + " has " + std::to_string(it->second.numel()) +
                                        " values, expected " + std::to_string(numel));
    return it->second;
}

}  // namespace

Lpips::Lpips(const TensorMap& weights, std::string source) : m_source(std::move(source)) {
    for (std::size_t l = 0; l < kLayers; ++l) {
        const LayerSpec& s = kSpecs[l];
        Conv& c = m_convs[l];
        c.out = s.out;
        c.in = s.in;
        c.kernel = s.kernel;
        c.stride = s.stride;
        c.pad = s.pad;
        const auto wn = static_cast<std::int64_t>(s.out * s.in * s.kernel * s.kernel);
        c.weight = require(weights, std::string(s.key) + ".weight", wn).values;
        c.bias = require(weights, std::string(s.key) + ".bias", static_cast<std::int64_t>(s.out)).values;
        m_lin[l] = require(weights, "lin" + std::to_string(l) + ".weight", static_cast<std::int64_t>(s.out)).values;
    }
}

Lpips Lpips::load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path))
        throw BackendError("lpips", "missing perceptual weights: " + path.string());
    try {
        return Lpips(read_safetensors(path), path.string());
    } catch (const IoError& e) {
        throw BackendError("lpips", std::string("corrupt perceptual weights: ") + e.what());
    }
}

std::optional<std::filesystem::path> Lpips::default_weights_path() {
    if (const char* p = std::getenv("MATFUSE_LPIPS_WEIGHTS"); p && *p)
        return std::filesystem::path(p);
    if (const char* d = std::getenv("MATFUSE_WEIGHTS_DIR"); d && *d)
        return std::filesystem::path(d) / "lpips_alex.safetensors";
    return std::nullopt;
}

std::array<Lpips::FeatureMap, Lpips::kLayers> Lpips::features(const ImageRGB& image) const {
    FeatureMap x{3, image.height(), image.width(), {}};
    x.data.resize(3 * x.height * x.width);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < x.height; ++y)
            for (std::size_t xx = 0; xx < x.width; ++xx) {
                const float v = static_cast<float>(image.at(y, xx, c)) * 2.0f - 1.0f;
                x.data[(c * x.height + y) * x.width + xx] = (v - kShift[c]) / kScale[c];
            }

    const auto conv_relu = [](const Conv& conv, const FeatureMap& in) {
        const std::size_t k = conv.kernel;
        if (in.height + 2 * conv.pad < k || in.width + 2 * conv.pad < k)
            throw ValidationError("image", "too small for the perceptual network");
        const std::size_t oh = (in.height + 2 * conv.pad - k) / conv.stride + 1;
        const std::size_t ow = (in.width + 2 * conv.pad - k) / conv.stride + 1;
        MatrixF cols = MatrixF::Zero(static_cast<Eigen::Index>(in.channels * k * k), static_cast<Eigen::Index>(oh * ow));
        for (std::size_t c = 0; c < in.channels; ++c)
            for (std::size_t ky = 0; ky < k; ++ky)
                for (std::size_t kx = 0; kx < k; ++kx) {
                    float* row = cols.row(static_cast<Eigen::Index>((c * k + ky) * k + kx)).data();
                    for (std::size_t oy = 0; oy < oh; ++oy) {
                        const auto iy = static_cast<std::ptrdiff_t>(oy * conv.stride + ky) -
                                        static_cast<std::ptrdiff_t>(conv.pad);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.height))
                            continue;
                        for (std::size_t ox = 0; ox < ow; ++ox) {
                            const auto ix = static_cast<std::ptrdiff_t>(ox * conv.stride + kx) -
                                            static_cast<std::ptrdiff_t>(conv.pad);
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in.width))
                                continue;
                            row[oy * ow + ox] = in.data[(c * in.height + static_cast<std::size_t>(iy)) * in.width +
                                                        static_cast<std::size_t>(ix)];
                        }
                    }
                }
        const Eigen::Map<const MatrixF> w(conv.weight.data(), static_cast<Eigen::Index>(conv.out),
                                          static_cast<Eigen::Index>(in.channels * k * k));
        MatrixF out = w * cols;
        for (Eigen::Index o = 0; o < out.rows(); ++o)
            out.row(o) = (out.row(o).array() + conv.bias[static_cast<std::size_t>(o)]).cwiseMax(0.0f);
        FeatureMap r{conv.out, oh, ow, {}};
        r.data.assign(out.data(), out.data() + out.size());
        return r;
    };

    const auto max_pool = [](const FeatureMap& in) {
        if (in.height < 3 || in.width < 3)
            throw ValidationError("image", "too small for the perceptual network");
        FeatureMap r{in.channels, (in.height - 3) / 2 + 1, (in.width - 3) / 2 + 1, {}};
        r.data.resize(r.channels * r.height * r.width);
        for (std::size_t c = 0; c < r.channels; ++c)
            for (std::size_t y = 0; y < r.height; ++y)
                for (std::size_t x = 0; x < r.width; ++x) {
                    float m = -std::numeric_limits<float>::infinity();
                    for (std::size_t dy = 0; dy < 3; ++dy)
                        for (std::size_t dx = 0; dx < 3; ++dx)
                            m = std::max(m, in.data[(c * in.height + 2 * y + dy) * in.width + 2 * x + dx]);
                    r.data[(c * r.height + y) * r.width + x] = m;
                }
        return r;
    };

    std::array<FeatureMap, kLayers> out;
    out[0] = conv_relu(m_convs[0], x);
    out[1] = conv_relu(m_convs[1], max_pool(out[0]));
    out[2] = conv_relu(m_convs[2], max_pool(out[1]));
    out[3] = conv_relu(m_convs[3], out[2]);
    out[4] = conv_relu(m_convs[4], out[3]);
    return out;
}

std::array<double, Lpips::kLayers> Lpips::layer_distances(const ImageRGB& a, const ImageRGB& b) const {
    if (a.height() != b.height() || a.width() != b.width())
        throw ShapeError("lpips: images are " + std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                         " and " + std::to_string(b.height()) + "x" + std::to_string(b.width()));
    a.validate_range();
    b.validate_range();
    const auto fa = features(a);
    const auto fb = features(b);
    std::array<double, kLayers> d{};
    for (std::size_t l = 0; l < kLayers; ++l) {
        const FeatureMap& x = fa[l];
        const FeatureMap& y = fb[l];
        const std::size_t hw = x.height * x.width;
        double total = 0.0;
        for (std::size_t p = 0; p < hw; ++p) {
            float nx = 0.0f, ny = 0.0f;
            for (std::size_t c = 0; c < x.channels; ++c) {
                nx += x.data[c * hw + p] * x.data[c * hw + p];
                ny += y.data[c * hw + p] * y.data[c * hw + p];
            }
            nx = std::sqrt(nx) + 1e-10f;
            ny = std::sqrt(ny) + 1e-10f;
            float acc = 0.0f;
            for (std::size_t c = 0; c < x.channels; ++c) {
                const float diff = x.data[c * hw + p] / nx - y.data[c * hw + p] / ny;
                acc += m_lin[l][c] * diff * diff;
            }
            total += acc;
        }
        d[l] = total / static_cast<double>(hw);
    }
    return d;
}

double Lpips::distance(const ImageRGB& a, const ImageRGB& b) const {
    double sum = 0.0;
    for (double v : layer_distances(a, b))
        sum += v;
    return sum;
}

}  // namespace matfuse::eval
