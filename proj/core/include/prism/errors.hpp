#pragma once

#include <cstdarg>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace prism {

inline std::string strformat(const char* fmt, ...) {
    va_list args;
    va_start(args, fmt);
    va_list args_copy;
    va_copy(args_copy, args);
    int len = std::vsnprintf(nullptr, 0, fmt, args);
    va_end(args);
    std::string out(len > 0 ? static_cast<size_t>(len) : 0, '\0');
    if (len > 0) {
        std::vsnprintf(out.data(), out.size() + 1, fmt, args_copy);
    }
    va_end(args_copy);
    return out;
}

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape or dimension mismatch between operands.
struct ShapeError : Error {
    using Error::Error;
};

// Invalid configuration or usage (CLI exit code 2).
struct ConfigError : Error {
    using Error::Error;
};

// Numerical failure such as NaN activations or a NaN loss (CLI exit code 3).
struct NumericalError : Error {
    using Error::Error;
};

// Filesystem failure; the message carries the offending path.
struct IoError : Error {
    using Error::Error;
};

}  // namespace prism
