#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace omniflow {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class InvalidParameter : public Error {
public:
    using Error::Error;
};

/// An error tied to a point in space (and optionally a time).
class LocatedError : public Error {
public:
    LocatedError(const std::string& what, std::vector<double> where, double time = 0.0)
        : Error(what), location_(std::move(where)), time_(time) {}

    const std::vector<double>& location() const noexcept { return location_; }
    double time() const noexcept { return time_; }

private:
    std::vector<double> location_;
    double time_;
};

/// Two eigenvalues of a Hessian coincide (within the gap tolerance).
class DegenerateHessian : public LocatedError {
public:
    using LocatedError::LocatedError;
};

/// The Lagrangian map lost invertibility (Hessian no longer positive definite).
class ShellCrossing : public LocatedError {
public:
    using LocatedError::LocatedError;
};

/// Newton inversion of the Lagrangian map failed.
class NoPreimage : public LocatedError {
public:
    using LocatedError::LocatedError;
};

/// The requested construction cannot be carried out with the given settings.
class ConfigurationError : public Error {
public:
    using Error::Error;
};

inline std::string format_point(const std::vector<double>& p) {
    std::string s = "(";
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(p[i]);
    }
    return s + ")";
}

} // namespace omniflow
