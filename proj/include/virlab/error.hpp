#pragma once

#include <stdexcept>
#include <string>

namespace virlab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid hyperparameters, inconsistent configuration, unknown config keys.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class IndexError : public Error {
public:
    using Error::Error;
};

/// File could not be read, written, or parsed.
class IoError : public Error {
public:
    using Error::Error;
};

/// Training diverged (NaN/Inf loss) or a numeric invariant broke at runtime.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Object used in a state that does not allow the operation.
class StateError : public Error {
public:
    using Error::Error;
};

}  // namespace virlab
