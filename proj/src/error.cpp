#include "modforge/error.hpp"

namespace modforge {

const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::ParseError:
            return "ParseError";
        case ErrorCode::DuplicateId:
            return "DuplicateId";
        case ErrorCode::EmptyText:
            return "EmptyText";
        case ErrorCode::InvalidLabel:
            return "InvalidLabel";
        case ErrorCode::InsufficientSamples:
            return "InsufficientSamples";
        case ErrorCode::EncoderUnavailable:
            return "EncoderUnavailable";
        case ErrorCode::DimensionMismatch:
            return "DimensionMismatch";
        case ErrorCode::MissingAssignment:
            return "MissingAssignment";
        case ErrorCode::InvalidArgument:
            return "InvalidArgument";
        case ErrorCode::Timeout:
            return "Timeout";
        case ErrorCode::TransportError:
            return "TransportError";
        case ErrorCode::RateLimitedExhausted:
            return "RateLimitedExhausted";
        case ErrorCode::MalformedProviderReply:
            return "MalformedProviderReply";
        case ErrorCode::MissingContext:
            return "MissingContext";
        case ErrorCode::NoClassificationFound:
            return "NoClassificationFound";
        case ErrorCode::UnknownCategoryToken:
            return "UnknownCategoryToken";
        case ErrorCode::MissingSection:
            return "MissingSection";
        case ErrorCode::PreconditionViolated:
            return "PreconditionViolated";
        case ErrorCode::IoError:
            return "IoError";
        case ErrorCode::EmptyDataset:
            return "EmptyDataset";
        case ErrorCode::EmptyInput:
            return "EmptyInput";
        case ErrorCode::InvalidGold:
            return "InvalidGold";
        case ErrorCode::CategoryMismatch:
            return "CategoryMismatch";
        case ErrorCode::EmptyFailures:
            return "EmptyFailures";
        case ErrorCode::ProviderFiltered:
            return "ProviderFiltered";
        case ErrorCode::AllCallsRefused:
            return "AllCallsRefused";
        case ErrorCode::StageInputMissing:
            return "StageInputMissing";
        case ErrorCode::ConfigError:
            return "ConfigError";
    }
    return "Error";
}

}  // namespace modforge
