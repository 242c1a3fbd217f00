#pragma once

#include <stdexcept>
#include <string>

namespace spn {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Input shapes or id sets do not line up.
struct DimensionMismatch : Error {
    using Error::Error;
};

// Residual vanishes after row/column/global centering; no fingerprint exists.
struct DegenerateResidual : Error {
    using Error::Error;
};

// Non-finite values or a failed factorization inside a solver.
struct NumericalFailure : Error {
    using Error::Error;
};

// Rank-deficient design matrix in regression fitting.
struct SingularFit : Error {
    using Error::Error;
};

// File format or filesystem problem.
struct IoError : Error {
    using Error::Error;
};

// An extraction run produced no usable fingerprints.
struct EmptyOutput : Error {
    using Error::Error;
};

}  // namespace spn
