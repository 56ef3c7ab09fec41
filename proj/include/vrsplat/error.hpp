// Copyright Contributors to the vrsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace vrsplat {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A rotation matrix failed the orthonormality / determinant check.
class InvalidPoseError : public Error {
public:
    explicit InvalidPoseError(const std::string& msg) : Error(msg) {}
};

// A point projected behind the camera near plane.
class BehindCameraError : public Error {
public:
    explicit BehindCameraError(const std::string& msg) : Error(msg) {}
};

// Nonpositive or otherwise unusable depth value.
class InvalidDepthError : public Error {
public:
    explicit InvalidDepthError(const std::string& msg) : Error(msg) {}
};

// Zero-norm quaternion or other unusable rotation parameterization.
class InvalidRotationError : public Error {
public:
    explicit InvalidRotationError(const std::string& msg) : Error(msg) {}
};

// Tensor/vector dimensions do not match the operation contract.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Bad configuration value or unknown configuration key.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Inputs violate the temporal/protocol preconditions of an operation.
class ProtocolError : public Error {
public:
    explicit ProtocolError(const std::string& msg) : Error(msg) {}
};

// Records are not in temporal order (negative time delta).
class TemporalOrderError : public Error {
public:
    explicit TemporalOrderError(const std::string& msg) : Error(msg) {}
};

// Structurally valid but degenerate input (e.g. empty mask).
class DegenerateInputError : public Error {
public:
    explicit DegenerateInputError(const std::string& msg) : Error(msg) {}
};

// API misuse, e.g. backward pass without a forward cache.
class UsageError : public Error {
public:
    explicit UsageError(const std::string& msg) : Error(msg) {}
};

// File I/O or format failure.
class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace vrsplat
