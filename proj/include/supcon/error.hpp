#pragma once

#include <stdexcept>
#include <string>

namespace supcon {

// Bad inputs: malformed files, out-of-range arguments, shape mismatches.
// The CLI maps these to exit code 1; anything else lands on exit code 2.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numeric failures surfaced mid-computation (non-finite values, NaN gradients).
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace supcon
