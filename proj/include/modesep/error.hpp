#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace modesep {

enum class ErrorCode {
    InvalidArgument,
    DimensionMismatch,
    NonFiniteSample,
    WindowTooShort,
    EmptyWindow,
    RankDeficient,
    UngriddedData,
    ParseError,
    NoConvergence,
    NoOscillation,
    FitDiverged,
    BracketingFailed,
    PointOutsideGrid,
    IllConditionedBasis,
    ConfigInvalid,
    IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every failure raised by the library carries one of the codes above so the
// CLI can map it onto an exit status without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace modesep
