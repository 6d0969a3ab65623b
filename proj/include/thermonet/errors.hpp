#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace thermonet {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// det F (or det C) too small to be a physical deformation.
class DegenerateDeformation : public Error {
public:
    using Error::Error;
};

class InvalidInput : public Error {
public:
    using Error::Error;
};

class InvalidParameter : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class UsageError : public Error {
public:
    using Error::Error;
};

/// The implicit material-point update did not converge.
class IntegrationFailure : public Error {
public:
    IntegrationFailure(const std::string& what, double residual)
        : Error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

class GenerationFailure : public Error {
public:
    using Error::Error;
};

/// A non-finite value appeared during evaluation or training.
class NumericError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

}  // namespace thermonet
