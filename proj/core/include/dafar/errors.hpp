#pragma once

#include <stdexcept>
#include <string>

namespace dafar {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// dataset ingestion
struct FileMissingError : Error {
    using Error::Error;
};
struct BadMagicError : Error {
    using Error::Error;
};
struct TruncatedRecordError : Error {
    using Error::Error;
};

// model construction / execution
struct ShapeMismatchError : Error {
    using Error::Error;
};
struct DivergenceError : Error {
    using Error::Error;
};

// detection / pipeline
struct CalibrationError : Error {
    using Error::Error;
};
struct CalibrationMismatchError : Error {
    using Error::Error;
};

// configuration and IO
struct ConfigError : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};

}  // namespace dafar
