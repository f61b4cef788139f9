#pragma once

#include <stdexcept>
#include <string>

namespace patchwork {

// Error taxonomy shared across the library. Messages name the offending
// entity (axis, key, path, line number) wherever one exists.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad or inconsistent user-supplied configuration values.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Shape/axis mismatches between tensors or images.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Malformed file content (headers, CSV rows, payload sizes).
class ParseError : public Error {
public:
    using Error::Error;
};

// Semantically invalid inputs (duplicate ids, missing files).
class ValidationError : public Error {
public:
    using Error::Error;
};

// Unsupported file format or pixel type.
class FormatError : public Error {
public:
    using Error::Error;
};

// Inputs on which the requested operation is mathematically undefined
// (constant image rescale, zero-variance z-score, all-zero crop).
class DegenerateInputError : public Error {
public:
    using Error::Error;
};

// API contract violations (stale tape, non-scalar loss, wrong channel count).
class ContractError : public Error {
public:
    using Error::Error;
};

// Filesystem failures carrying the path involved.
class IoError : public Error {
public:
    using Error::Error;
};

// Non-finite values where finite ones are required (diverged training).
class NumericError : public Error {
public:
    using Error::Error;
};

} // namespace patchwork
