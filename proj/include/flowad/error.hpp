#pragma once

#include <stdexcept>
#include <string>

namespace flowad {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Tensor shapes do not satisfy an operation's contract.
struct DimensionError : Error {
    using Error::Error;
};

/// Input values are semantically invalid (empty key set, point off the ring, ...).
struct InvalidInputError : Error {
    using Error::Error;
};

/// Zero ego displacement; callers usually fall back to the previous direction.
struct StationaryError : InvalidInputError {
    using InvalidInputError::InvalidInputError;
};

/// Value outside the mathematical domain (nonpositive sigma, log of nonpositive).
struct DomainError : Error {
    using Error::Error;
};

/// Bad configuration (even aggregation range, mismatched optimizer keys, ...).
struct ConfigError : Error {
    using Error::Error;
};

/// Motion parameters are physically impossible (steering radius below half the ego width).
struct KinematicError : Error {
    using Error::Error;
};

/// Corrupt or unrecognized file contents.
struct FormatError : Error {
    using Error::Error;
};

/// Filesystem failures, reported with path context.
struct IoError : Error {
    using Error::Error;
};

} // namespace flowad
