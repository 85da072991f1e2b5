#pragma once

#include <stdexcept>
#include <string>

namespace patchace {

/// Base class for all errors raised by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid argument, shape mismatch, or out-of-range index.
struct ArgumentError : Error {
    using Error::Error;
};

/// Malformed or unsupported file content.
struct FormatError : Error {
    using Error::Error;
};

/// Filesystem or stream failure.
struct IoError : Error {
    using Error::Error;
};

/// Numerical failure: non-finite result, failed decomposition, negative
/// quadratic form beyond tolerance.
struct NumericError : Error {
    using Error::Error;
};

/// Inconsistent run configuration (missing signature, bad split, ...).
struct ConfigError : Error {
    using Error::Error;
};

/// Metric undefined for the given inputs (e.g. single-class AUROC).
struct MetricError : Error {
    using Error::Error;
};

} // namespace patchace
