#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bodyfit {

enum class ErrorCode {
    invalid_argument,  // bad numeric input, non-finite values, bad step size
    config,            // malformed or inconsistent configuration
    data,              // malformed input files, bad records
    io,                // filesystem failures
    shape_mismatch,    // tensor/vector dimension disagreement
    invalid_state,     // stale cache, wrong network mode
    unfittable,        // too few visible joints to pose the problem
    degenerate,        // rank-deficient alignment, empty report
    divergence,        // optimization produced non-finite values
    internal,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

// Thrown by the trainer when the unrolled loss stops being finite.
class DivergenceError : public Error {
public:
    DivergenceError(std::size_t step, const std::string& what)
        : Error(ErrorCode::divergence, what), step_(step) {}

    std::size_t step() const { return step_; }

private:
    std::size_t step_;
};

}  // namespace bodyfit
