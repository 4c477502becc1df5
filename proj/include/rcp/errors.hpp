#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rcp {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Violated precondition on caller-supplied data (empty cloud, size mismatch, ...).
class InvalidInput : public Error {
public:
    explicit InvalidInput(const std::string& what) : Error(what) {}
};

/// Rigid fit attempted on a rank-deficient or under-weighted point set.
class DegenerateFit : public Error {
public:
    explicit DegenerateFit(const std::string& what) : Error(what) {}
};

/// Weight bundle shapes are inconsistent with the requested forward pass.
class WeightShapeError : public Error {
public:
    explicit WeightShapeError(const std::string& what) : Error(what) {}
};

/// Malformed file content. Carries the 1-based line (or byte offset) when known.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}

    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// Non-finite value detected in solver state. Carries the iteration index.
class NumericalFailure : public Error {
public:
    NumericalFailure(const std::string& what, int iteration)
        : Error(what + " (iteration " + std::to_string(iteration) + ")"), iteration_(iteration) {}

    int iteration() const { return iteration_; }

private:
    int iteration_;
};

}  // namespace rcp
