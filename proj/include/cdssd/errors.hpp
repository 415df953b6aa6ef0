#pragma once

#include <stdexcept>
#include <string>

namespace cdssd {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shapes or sizes that do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Index outside its valid range.
class IndexError : public Error {
public:
    using Error::Error;
};

/// Operation called on an object in the wrong state.
class StateError : public Error {
public:
    using Error::Error;
};

/// Factorization failure or non-finite intermediate.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Request exceeds what an exact routine can enumerate.
class CapabilityError : public Error {
public:
    using Error::Error;
};

/// Threshold search could not reach its target.
class CalibrationError : public Error {
public:
    using Error::Error;
};

/// Input stream does not provide what was asked for.
class DataError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration or scenario file.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace cdssd
