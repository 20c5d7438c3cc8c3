#pragma once

#include <stdexcept>
#include <string>

namespace rsdiff {

// Base for every error the library raises on bad input or bad state.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Non-finite values, degenerate statistics that cannot be guarded, diverged training.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace rsdiff
