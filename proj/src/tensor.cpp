// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "matfuse/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "matfuse/errors.hpp"

namespace matfuse {

std::string shape_to_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i)
            out += "x";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill) : m_shape(std::move(shape)), m_values(shape_numel(m_shape), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : m_shape(std::move(shape)), m_values(std::move(values)) {
    if (m_values.size() != shape_numel(m_shape))
        throw ShapeError("tensor of shape " + shape_to_string(m_shape) + " given " + std::to_string(m_values.size()) +
                         " values");
}

Tensor& Tensor::operator+=(const Tensor& other) {
    require_same_shape(*this, other, "tensor +=");
    for (std::size_t i = 0; i < m_values.size(); ++i)
        m_values[i] += other.m_values[i];
    return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
    require_same_shape(*this, other, "tensor -=");
    for (std::size_t i = 0; i < m_values.size(); ++i)
        m_values[i] -= other.m_values[i];
    return *this;
}

Tensor& Tensor::operator*=(double s) {
    for (double& v : m_values)
        v *= s;
    return *this;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(Tensor a, double s) { return a *= s; }
Tensor operator*(double s, Tensor a) { return a *= s; }

void axpy(double alpha, const Tensor& x, Tensor& y) {
    require_same_shape(x, y, "axpy");
    auto xs = x.values();
    auto ys = y.values();
    for (std::size_t i = 0; i < xs.size(); ++i)
        ys[i] += alpha * xs[i];
}

double dot(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "dot");
    return std::inner_product(a.values().begin(), a.values().end(), b.values().begin(), 0.0);
}

double squared_norm(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values())
        s += v * v;
    return s;
}

double max_abs(const Tensor& a) {
    double m = 0.0;
    for (double v : a.values())
        m = std::max(m, std::abs(v));
    return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

bool all_finite(const Tensor& a) {
    return std::all_of(a.values().begin(), a.values().end(), [](double v) { return std::isfinite(v); });
}

void require_same_shape(const Tensor& a, const Tensor& b, const std::string& what) {
    if (!a.same_shape(b))
        throw ShapeError(what + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
}

}  // namespace matfuse
