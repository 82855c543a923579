#pragma once

#include <stdexcept>
#include <string>

namespace nld {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Kernel violates its structural assumptions (negative values, zero moment, ...).
class InvalidKernelError : public Error {
public:
    using Error::Error;
};

/// Operation requested for the wrong kernel mode or grid kind.
class ModeError : public Error {
public:
    using Error::Error;
};

/// Fields/grids whose node sets do not match.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Empty or otherwise unusable spatial domain.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Bad user configuration (unknown keys, unparsable values, violated preconditions).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Numerical failure: eigensolver breakdown, blow-up, division by a vanishing derivative.
class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace nld
