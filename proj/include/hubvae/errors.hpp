#pragma once

#include <stdexcept>
#include <string>

namespace hubvae {

struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ParameterError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Non-finite values produced by a numeric computation; the message names
// the offending term.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input file; the message carries an offset or line number.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace hubvae
