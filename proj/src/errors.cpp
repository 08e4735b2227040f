#include "tmsq/errors.hpp"

namespace tmsq {

const char* error_code_name(ErrorCode code) {
    switch (code) {
    case ErrorCode::invalid_dimension:   return "invalid_dimension";
    case ErrorCode::unknown_subsystem:   return "unknown_subsystem";
    case ErrorCode::incompatible_spaces: return "incompatible_spaces";
    case ErrorCode::level_mismatch:      return "level_mismatch";
    case ErrorCode::invalid_state:       return "invalid_state";
    case ErrorCode::truncation_leak:     return "truncation_leak";
    case ErrorCode::degenerate_detuning: return "degenerate_detuning";
    case ErrorCode::config_invalid:      return "config_invalid";
    case ErrorCode::step_size_too_large: return "step_size_too_large";
    case ErrorCode::integrator_failure:  return "integrator_failure";
    case ErrorCode::dimension_too_large: return "dimension_too_large";
    case ErrorCode::invalid_variance:    return "invalid_variance";
    }
    return "unknown";
}

} // namespace tmsq
