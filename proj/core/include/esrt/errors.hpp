#pragma once

#include <stdexcept>
#include <string>

namespace esrt {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// tensor shape precondition violations; message names both shapes
struct ShapeError : Error {
    using Error::Error;
};

// malformed or unsupported audio input
struct AudioError : Error {
    using Error::Error;
};

// cross-module configuration inconsistencies
struct ConfigError : Error {
    using Error::Error;
};

// socket / channel failures
struct NetError : Error {
    using Error::Error;
};

} // namespace esrt
