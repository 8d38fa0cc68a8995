#pragma once

#include <stdexcept>
#include <string>

namespace modalml {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shape or length mismatch between arguments.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Argument outside its admissible range (feature bounds, indices, fractions).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Iterative numerical method failed to converge or hit a singular system.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent file contents.
class FormatError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
    if (!ok) throw DomainError(what);
}

inline void require_dims(bool ok, const std::string& what) {
    if (!ok) throw DimensionError(what);
}

} // namespace detail
} // namespace modalml
