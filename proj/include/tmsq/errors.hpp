#pragma once

#include <stdexcept>
#include <string>

namespace tmsq {

// Machine-readable failure categories. The CLI maps config_invalid and
// degenerate_detuning (both user-input problems) to exit code 2 and
// everything else to exit code 3.
enum class ErrorCode {
    invalid_dimension,
    unknown_subsystem,
    incompatible_spaces,
    level_mismatch,
    invalid_state,
    truncation_leak,
    degenerate_detuning,
    config_invalid,
    step_size_too_large,
    integrator_failure,
    dimension_too_large,
    invalid_variance,
};

const char* error_code_name(ErrorCode code);

class SimError : public std::runtime_error {
public:
    SimError(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
          code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw SimError(code, message);
}

} // namespace tmsq
