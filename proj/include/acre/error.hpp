#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace acre {

enum class ErrorCode {
    // ingest
    MissingFile,
    MissingColumn,
    DuplicateClipId,
    WrongCaptionCount,
    VariantCountMismatch,
    MalformedRecord,
    UnsupportedEncoding,
    CorruptHeader,
    DimMismatch,
    BadMagic,
    TruncatedFile,
    // dsp
    TooShort,
    WrongSampleRate,
    InvalidArgument,
    // encoder
    InputTooShort,
    DropExceedsGrid,
    EmptyGrid,
    // space
    ZeroNormVector,
    NonSquare,
    ShapeMismatch,
    EmptyDataset,
    MissingAugmentation,
    // retrieval
    EmptyIndex,
    UnknownTargetId,
    DuplicateId,
    // cli
    InvalidConfig,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::DuplicateClipId: return "DuplicateClipId";
    case ErrorCode::WrongCaptionCount: return "WrongCaptionCount";
    case ErrorCode::VariantCountMismatch: return "VariantCountMismatch";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::UnsupportedEncoding: return "UnsupportedEncoding";
    case ErrorCode::CorruptHeader: return "CorruptHeader";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::WrongSampleRate: return "WrongSampleRate";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InputTooShort: return "InputTooShort";
    case ErrorCode::DropExceedsGrid: return "DropExceedsGrid";
    case ErrorCode::EmptyGrid: return "EmptyGrid";
    case ErrorCode::ZeroNormVector: return "ZeroNormVector";
    case ErrorCode::NonSquare: return "NonSquare";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::MissingAugmentation: return "MissingAugmentation";
    case ErrorCode::EmptyIndex: return "EmptyIndex";
    case ErrorCode::UnknownTargetId: return "UnknownTargetId";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    }
    return "Unknown";
}

/// Every failure in the library surfaces as an Error carrying a stable code.
/// The message is a single line and names the offending file/row/id when known.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

}  // namespace acre
