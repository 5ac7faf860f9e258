#include "fastval/errors.hpp"

namespace fastval {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidParameter: return "invalid_parameter";
        case ErrorCode::DegenerateSurface: return "degenerate_surface";
        case ErrorCode::ButterflyViolation: return "butterfly_violation";
        case ErrorCode::ZeroMaturity: return "zero_maturity";
        case ErrorCode::NonConvergence: return "non_convergence";
        case ErrorCode::SingularMatrix: return "singular_matrix";
        case ErrorCode::SpotOutOfGrid: return "spot_out_of_grid";
        case ErrorCode::DimensionMismatch: return "dimension_mismatch";
        case ErrorCode::DegenerateData: return "degenerate_data";
        case ErrorCode::FactorizationFailure: return "factorization_failure";
        case ErrorCode::Io: return "io_error";
        case ErrorCode::SchemaMismatch: return "schema_mismatch";
        case ErrorCode::ExcessiveDropRate: return "excessive_drop_rate";
        case ErrorCode::UnknownMode: return "unknown_mode";
    }
    return "unknown";
}

}  // namespace fastval
