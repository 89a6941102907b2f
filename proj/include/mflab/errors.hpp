#pragma once

#include <stdexcept>
#include <string>

namespace mflab {

/// Bad user input (wrong sizes, out-of-range parameters, grid mismatch).
struct InvalidArgument : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// A requested computation would exceed a configured size cap.
struct ResourceLimit : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Inputs are numerically degenerate (e.g. linearly dependent packets).
struct DegenerateInput : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// The exact propagator failed to converge within its substep budget.
struct PropagationFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// The mean-field integrator lost accuracy (Gram drift beyond tolerance).
struct IntegratorAccuracy : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Two independent evaluation routes disagreed beyond tolerance.
struct InternalConsistency : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace mflab
