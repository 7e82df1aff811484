#include "ctxsub/error.hpp"

namespace ctxsub {

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::IoFailure: return "IoFailure";
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::VersionMismatch: return "VersionMismatch";
        case ErrorCode::TruncatedPayload: return "TruncatedPayload";
        case ErrorCode::NonFiniteEntry: return "NonFiniteEntry";
        case ErrorCode::DuplicateId: return "DuplicateId";
        case ErrorCode::IdCountMismatch: return "IdCountMismatch";
        case ErrorCode::UnknownId: return "UnknownId";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::MalformedLine: return "MalformedLine";
        case ErrorCode::EmptyBank: return "EmptyBank";
        case ErrorCode::InsufficientNeighbors: return "InsufficientNeighbors";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::MissingPositive: return "MissingPositive";
        case ErrorCode::NotOneHot: return "NotOneHot";
        case ErrorCode::NotDistribution: return "NotDistribution";
        case ErrorCode::GridTooLarge: return "GridTooLarge";
        case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorCode::NeedTwoClusters: return "NeedTwoClusters";
    }
    return "UnknownError";
}

}  // namespace ctxsub
