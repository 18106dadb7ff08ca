#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace imresnet {

// Base for every error the library raises. Callers that only care about
// success/failure catch this; the CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class SingularMatrix : public Error {
public:
    using Error::Error;
};

// Raised by the nonlinear block solvers. layer() is -1 when the failure
// happened outside a model (a bare block call).
class SolverDiverged : public Error {
public:
    SolverDiverged(const std::string& what, double residual, int layer = -1)
        : Error(what), residual_(residual), layer_(layer) {}

    double residual() const noexcept { return residual_; }
    int layer() const noexcept { return layer_; }

private:
    double residual_;
    int layer_;
};

class NonFiniteLoss : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace imresnet
