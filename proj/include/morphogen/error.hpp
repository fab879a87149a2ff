#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace morphogen {

enum class ErrorCode {
    BadMagic,
    TruncatedPayload,
    LabelOutOfRange,
    CountMismatch,
    DegenerateSplit,
    InvalidArch,
    ShapeMismatch,
    NonFiniteLoss,
    InvalidEpsilon,
    VersionMismatch,
    ChecksumFailure,
    MalformedContainer,
    InvalidConfig,
    DivergedLoss,
    EmptyDataset,
    NonFiniteImage,
    KTooLarge,
    MissingKnownRows,
    PerplexityInfeasible,
    DimensionMismatch,
    EmptyInput,
    Io,
};

std::string_view error_code_name(ErrorCode code);

// Every module reports failures through this type; `code()` is the stable
// part, the message is for humans.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
          code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace morphogen
