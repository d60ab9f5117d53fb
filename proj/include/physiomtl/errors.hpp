#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace physiomtl {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A precondition on user-supplied data or configuration was violated.
struct InvalidInput : Error {
    using Error::Error;
};

// Least-squares design is rank deficient and no ridge was requested.
struct DegenerateFit : Error {
    explicit DegenerateFit(const std::string& what, std::string task = {})
        : Error(task.empty() ? what : task + ": " + what), task_id(std::move(task)) {}
    std::string task_id;
};

// Floating-point breakdown (underflow/overflow) inside a numerical routine.
struct NumericalFailure : Error {
    using Error::Error;
};

// The optimizer produced a non-finite objective.
struct DivergedSolve : Error {
    DivergedSolve(const std::string& what, int iter)
        : Error(what + " (outer iteration " + std::to_string(iter) + ")"), iteration(iter) {}
    int iteration;
};

// Not enough samples for the requested statistic.
struct InsufficientData : Error {
    using Error::Error;
};

// Raw-dataset parsing or layout problem.
struct IngestError : Error {
    using Error::Error;
};

}  // namespace physiomtl
