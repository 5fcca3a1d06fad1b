// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace matfuse {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A value violates a documented bound. `field()` names the offending key.
class ValidationError : public Error {
public:
    ValidationError(std::string field, const std::string& message)
        : Error(field.empty() ? message : field + ": " + message), m_field(std::move(field)) {}

    const std::string& field() const { return m_field; }

private:
    std::string m_field;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

/// Backend could not be loaded or failed while running.
class BackendError : public Error {
public:
    BackendError(std::string component, const std::string& message)
        : Error(message), m_component(std::move(component)) {}

    const std::string& component() const { return m_component; }

private:
    std::string m_component;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Sampling produced non-finite values at `step()`.
class NumericError : public Error {
public:
    NumericError(int step, const std::string& message) : Error(message), m_step(step) {}
    int step() const { return m_step; }

private:
    int m_step;
};

class CancelledError : public Error {
public:
    explicit CancelledError(int step) : Error("cancelled at step " + std::to_string(step)), m_step(step) {}
    int step() const { return m_step; }

private:
    int m_step;
};

}  // namespace matfuse
