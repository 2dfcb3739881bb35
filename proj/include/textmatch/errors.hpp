#pragma once

#include <stdexcept>
#include <string>

namespace textmatch {

// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration or arguments (CLI exit code 2).
struct ConfigError : Error {
    using Error::Error;
};

// Invalid or inconsistent data (CLI exit code 3).
struct DataError : Error {
    using Error::Error;
};

struct IngestError : DataError {
    using DataError::DataError;
};
struct EmptyVocabulary : DataError {
    using DataError::DataError;
};
struct FormatError : DataError {
    using DataError::DataError;
};
struct ShapeError : DataError {
    using DataError::DataError;
};
struct SeparationError : DataError {
    using DataError::DataError;
};
struct SingularCovariance : DataError {
    using DataError::DataError;
};
struct NoFiniteDistances : DataError {
    using DataError::DataError;
};
struct SizeError : DataError {
    using DataError::DataError;
};
struct OverlapError : DataError {
    using DataError::DataError;
};
struct MissingConcepts : DataError {
    using DataError::DataError;
};
struct MissingFeature : DataError {
    using DataError::DataError;
};
struct DesignInconsistency : DataError {
    using DataError::DataError;
};
struct InsufficientSample : DataError {
    using DataError::DataError;
};

}  // namespace textmatch
