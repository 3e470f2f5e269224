#pragma once

#include <stdexcept>
#include <string>

namespace kvslim {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionMismatch : Error {
    using Error::Error;
};
struct EmptySequence : Error {
    using Error::Error;
};
struct IndexOutOfRange : Error {
    using Error::Error;
};
struct DegenerateDirection : Error {
    using Error::Error;
};
struct DegenerateSystem : Error {
    using Error::Error;
};
struct ConvergenceFailure : Error {
    using Error::Error;
};
struct InsufficientLength : Error {
    using Error::Error;
};
struct InsufficientPairs : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};
struct BadMagic : IoError {
    using IoError::IoError;
};
struct BadVersion : IoError {
    using IoError::IoError;
};

}  // namespace kvslim
