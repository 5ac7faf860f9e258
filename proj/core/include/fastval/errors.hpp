#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fastval {

enum class ErrorCode {
    InvalidParameter,
    DegenerateSurface,
    ButterflyViolation,
    ZeroMaturity,
    NonConvergence,
    SingularMatrix,
    SpotOutOfGrid,
    DimensionMismatch,
    DegenerateData,
    FactorizationFailure,
    Io,
    SchemaMismatch,
    ExcessiveDropRate,
    UnknownMode,
};

/// Stable machine-readable name, e.g. "butterfly_violation".
std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so the
/// CLI can report it without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

}  // namespace fastval
