#pragma once

#include <stdexcept>
#include <string>

namespace labelfuse {

/// Base class for all errors thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Shapes of two operands do not line up.
struct DimensionError : Error {
    using Error::Error;
};

/// A value violates a documented precondition (range, sign, feasibility).
struct ValueError : Error {
    using Error::Error;
};

/// A class index outside {0, ..., K-1}.
struct InvalidLabelError : ValueError {
    using ValueError::ValueError;
};

/// More basis matrices requested than distinct K x K permutations exist.
struct InfeasibleBasisError : ValueError {
    using ValueError::ValueError;
};

/// A computation produced or received a non-finite number.
struct NumericError : Error {
    using Error::Error;
};

/// A file could not be parsed; the message names the offending location.
struct ParseError : Error {
    using Error::Error;
};

/// An experiment configuration is inconsistent or incomplete.
struct ConfigError : Error {
    using Error::Error;
};

}  // namespace labelfuse
