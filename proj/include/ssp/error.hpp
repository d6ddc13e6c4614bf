#ifndef SSP_ERROR_HPP
#define SSP_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace ssp {

enum class ErrorCode {
    EmptyMask,
    ZeroPrototype,
    DimMismatch,
    InvalidValue,
    InvalidConfig,
    InvalidRatio,
    BadMagic,
    BadVersion,
    BadKind,
    BadDims,
    DimOverflow,
    TruncatedPayload,
    TrailingBytes,
    NonFiniteValue,
    InvalidMaskValue,
    Io,
    BadManifest,
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::ZeroPrototype: return "ZeroPrototype";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::InvalidValue: return "InvalidValue";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidRatio: return "InvalidRatio";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::BadVersion: return "BadVersion";
    case ErrorCode::BadKind: return "BadKind";
    case ErrorCode::BadDims: return "BadDims";
    case ErrorCode::DimOverflow: return "DimOverflow";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::TrailingBytes: return "TrailingBytes";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::InvalidMaskValue: return "InvalidMaskValue";
    case ErrorCode::Io: return "Io";
    case ErrorCode::BadManifest: return "BadManifest";
    }
    return "Unknown";
}

/// Format errors come from reading SSPT files or manifests; everything else
/// is raised by the numerical pipeline or by argument validation.
inline bool is_format_error(ErrorCode code) {
    switch (code) {
    case ErrorCode::BadMagic:
    case ErrorCode::BadVersion:
    case ErrorCode::BadKind:
    case ErrorCode::BadDims:
    case ErrorCode::DimOverflow:
    case ErrorCode::TruncatedPayload:
    case ErrorCode::TrailingBytes:
    case ErrorCode::NonFiniteValue:
    case ErrorCode::InvalidMaskValue:
    case ErrorCode::Io:
    case ErrorCode::BadManifest:
        return true;
    default:
        return false;
    }
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), message_(what) {}

    ErrorCode code() const noexcept { return code_; }
    /// Message without the code prefix.
    const std::string& message() const noexcept { return message_; }

private:
    ErrorCode code_;
    std::string message_;
};

} // namespace ssp

#endif // SSP_ERROR_HPP
