#pragma once

#include <stdexcept>
#include <string>

namespace whitenopt {

// Base class for every failure the library reports.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Shape mismatches and other argument violations.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Non-finite values, loss of positive definiteness, failed convergence.
class NumericalError : public Error {
public:
    using Error::Error;
};

// Malformed config text or corrupt checkpoint bytes.
class ParseError : public Error {
public:
    using Error::Error;
};

// Filesystem failures (unreadable input, unwritable output).
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace whitenopt
