#pragma once

#include <stdexcept>
#include <string>

namespace modforge {

enum class ErrorCode {
    ParseError,
    DuplicateId,
    EmptyText,
    InvalidLabel,
    InsufficientSamples,
    EncoderUnavailable,
    DimensionMismatch,
    MissingAssignment,
    InvalidArgument,
    Timeout,
    TransportError,
    RateLimitedExhausted,
    MalformedProviderReply,
    MissingContext,
    NoClassificationFound,
    UnknownCategoryToken,
    MissingSection,
    PreconditionViolated,
    IoError,
    EmptyDataset,
    EmptyInput,
    InvalidGold,
    CategoryMismatch,
    EmptyFailures,
    ProviderFiltered,
    AllCallsRefused,
    StageInputMissing,
    ConfigError,
};

const char* to_string(ErrorCode code);

/// Every failure surfaced by the library carries one of the codes above so
/// callers (and the CLI exit-code mapping) can branch without string matching.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// ParseError with a 1-based line number (0 when not line-oriented).
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& cause)
        : Error(ErrorCode::ParseError,
                line ? "line " + std::to_string(line) + ": " + cause : cause),
          line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// True for the transport-level failures that count toward provider exhaustion.
inline bool is_provider_failure(ErrorCode code) {
    return code == ErrorCode::Timeout || code == ErrorCode::TransportError ||
           code == ErrorCode::RateLimitedExhausted ||
           code == ErrorCode::MalformedProviderReply;
}

}  // namespace modforge
