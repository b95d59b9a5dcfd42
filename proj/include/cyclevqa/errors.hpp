#pragma once

#include <stdexcept>
#include <string>

namespace cyclevqa {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad caller-supplied value (counts < 1, out-of-range indices, unknown config keys).
struct ArgumentError : Error {
    using Error::Error;
};

// Malformed input file; message names the path and, where known, the record index.
struct ParseError : Error {
    using Error::Error;
};

// Structurally valid data that violates cross-record invariants.
struct IntegrityError : Error {
    using Error::Error;
};

// Tensor dimension mismatch; message names the offending tensor role.
struct ShapeError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace cyclevqa
