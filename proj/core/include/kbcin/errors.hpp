#pragma once

#include <stdexcept>
#include <string>

namespace kbcin {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor extents do not line up for the requested operation.
struct DimensionError : Error {
    using Error::Error;
};

// A caller violated a stated precondition (empty mask, i > t, ...).
struct PreconditionError : Error {
    using Error::Error;
};

// Malformed corpus / knowledge / overlay document.
struct ParseError : Error {
    using Error::Error;
};

// Invalid run configuration (empty split, bad ranges, ...).
struct ConfigError : Error {
    using Error::Error;
};

// A value that must be finite is not.
struct NumericError : Error {
    using Error::Error;
};

}  // namespace kbcin
