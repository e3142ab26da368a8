#pragma once

#include <stdexcept>
#include <string>

namespace hijacklab {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Tensor/graph shape mismatch. Message names the op and the offending shapes.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Non-finite value produced by a forward pass or training step.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Precondition violation (empty dataset, bad rate, missing table entry, ...).
class ContractError : public Error {
public:
    using Error::Error;
};

/// Malformed input file (bad magic, truncated stream, count mismatch).
class ParseError : public Error {
public:
    using Error::Error;
};

/// Filesystem-level failure (missing file, write failure).
class IoError : public Error {
public:
    using Error::Error;
};

/// Invalid experiment configuration; message holds one line per bad field.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace hijacklab
