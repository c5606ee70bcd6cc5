#ifndef PMFS_ERRORS_HPP
#define PMFS_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace pmfs {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor/layer dimension mismatch.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration value or inconsistent run configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed or unusable input data.
class DataError : public Error {
public:
    using Error::Error;
};

/// Input file schema problem (e.g. a required CSV column is absent).
class SchemaError : public DataError {
public:
    using DataError::DataError;
};

/// Non-finite value produced where finite arithmetic is required.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Time integration blow-up.
class StabilityError : public NumericError {
public:
    using NumericError::NumericError;
};

/// A required per-level input is missing at prediction time.
class AvailabilityError : public Error {
public:
    using Error::Error;
};

/// Levels trained out of hierarchy order.
class OrderingError : public Error {
public:
    using Error::Error;
};

/// Archive does not start with the expected magic bytes.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Archive version not supported by this reader.
class VersionError : public FormatError {
public:
    using FormatError::FormatError;
};

/// Archive shorter than its declared contents.
class IntegrityError : public FormatError {
public:
    using FormatError::FormatError;
};

/// Undefined metric (e.g. zero-norm reference sample).
class MetricError : public Error {
public:
    using Error::Error;
};

} // namespace pmfs

#endif
