#include "morphogen/error.hpp"

namespace morphogen {

std::string_view error_code_name(ErrorCode code) {
    switch (code) {
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::CountMismatch: return "CountMismatch";
    case ErrorCode::DegenerateSplit: return "DegenerateSplit";
    case ErrorCode::InvalidArch: return "InvalidArch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::InvalidEpsilon: return "InvalidEpsilon";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::ChecksumFailure: return "ChecksumFailure";
    case ErrorCode::MalformedContainer: return "MalformedContainer";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::NonFiniteImage: return "NonFiniteImage";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::MissingKnownRows: return "MissingKnownRows";
    case ErrorCode::PerplexityInfeasible: return "PerplexityInfeasible";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

} // namespace morphogen
