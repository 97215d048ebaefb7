#pragma once

#include <stdexcept>
#include <string>

namespace msdc {

// Error taxonomy maps onto the CLI exit codes: usage 1, data 2, numerical 3.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad flags, unknown config keys, invalid experiment specs.
struct UsageError : Error {
    using Error::Error;
};

// Unreadable or malformed input data, length mismatches, missing channels.
struct DataError : Error {
    using Error::Error;
};

// Divergence, non-convergence, non-finite values.
struct NumericError : Error {
    using Error::Error;
};

}  // namespace msdc
