#pragma once

#include <stdexcept>
#include <string>

namespace ctxsub {

enum class ErrorCode {
    IoFailure,
    BadMagic,
    VersionMismatch,
    TruncatedPayload,
    NonFiniteEntry,
    DuplicateId,
    IdCountMismatch,
    UnknownId,
    DimensionMismatch,
    MalformedLine,
    EmptyBank,
    InsufficientNeighbors,
    InvalidArgument,
    ShapeMismatch,
    MissingPositive,
    NotOneHot,
    NotDistribution,
    GridTooLarge,
    NonFiniteLoss,
    NeedTwoClusters,
};

const char* error_code_name(ErrorCode code);

/// All library failures surface as this exception. The message always
/// names the offending file offset, id or line where one exists.
class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

    ErrorCode code() const { return code_; }

  private:
    ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

}  // namespace ctxsub
