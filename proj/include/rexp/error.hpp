#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rexp {

enum class ErrorCode {
    OutOfManifold,
    DegenerateField,
    SingularBase,
    BetaTooLarge,
    OutsideDomain,
    NoCrossing,
    LeftTube,
    Timeout,
    GammaTooLarge,
    StepTooCoarse,
    Saturated,
    Validation,
};

inline std::string_view to_string(ErrorCode code)
{
    switch (code) {
    case ErrorCode::OutOfManifold: return "OutOfManifold";
    case ErrorCode::DegenerateField: return "DegenerateField";
    case ErrorCode::SingularBase: return "SingularBase";
    case ErrorCode::BetaTooLarge: return "BetaTooLarge";
    case ErrorCode::OutsideDomain: return "OutsideDomain";
    case ErrorCode::NoCrossing: return "NoCrossing";
    case ErrorCode::LeftTube: return "LeftTube";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::GammaTooLarge: return "GammaTooLarge";
    case ErrorCode::StepTooCoarse: return "StepTooCoarse";
    case ErrorCode::Saturated: return "Saturated";
    case ErrorCode::Validation: return "Validation";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so that
/// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace rexp
