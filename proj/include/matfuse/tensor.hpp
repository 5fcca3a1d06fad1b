// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace matfuse {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major array of doubles. Latents are stored as C x H x W.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    const Shape& shape() const { return m_shape; }
    std::size_t rank() const { return m_shape.size(); }
    std::size_t dim(std::size_t i) const { return m_shape.at(i); }
    std::size_t size() const { return m_values.size(); }
    bool empty() const { return m_values.empty(); }

    std::span<double> values() { return m_values; }
    std::span<const double> values() const { return m_values; }
    double* data() { return m_values.data(); }
    const double* data() const { return m_values.data(); }

    double& operator[](std::size_t i) { return m_values[i]; }
    double operator[](std::size_t i) const { return m_values[i]; }

    // rank-3 accessors (channel, row, col)
    double& at(std::size_t c, std::size_t y, std::size_t x) {
        return m_values[(c * m_shape[1] + y) * m_shape[2] + x];
    }
    double at(std::size_t c, std::size_t y, std::size_t x) const {
        return m_values[(c * m_shape[1] + y) * m_shape[2] + x];
    }

    bool same_shape(const Tensor& other) const { return m_shape == other.m_shape; }

    Tensor& operator+=(const Tensor& other);
    Tensor& operator-=(const Tensor& other);
    Tensor& operator*=(double s);

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape m_shape;
    std::vector<double> m_values;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, double s);
Tensor operator*(double s, Tensor a);

/// y += alpha * x
void axpy(double alpha, const Tensor& x, Tensor& y);
double dot(const Tensor& a, const Tensor& b);
double squared_norm(const Tensor& a);
double max_abs(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& a);

/// Throws ShapeError when shapes differ; `what` names the operands.
void require_same_shape(const Tensor& a, const Tensor& b, const std::string& what);

}  // namespace matfuse
