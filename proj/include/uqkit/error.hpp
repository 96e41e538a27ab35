#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace uqkit {

enum class ErrorCode {
    MissingColumn,
    UnparseableNumeric,
    EmptyDataset,
    TooFewSamples,
    InvalidArgument,
    LengthMismatch,
    EmptyInput,
    DimensionMismatch,
    CholeskyFailure,
    NonFiniteObjective,
    TooManyFeatures,
    MissingRawBounds,
    EmptyIntersection,
    FeatureMismatch,
    MismatchedPartitions,
    IoError,
    ParseError,
};

std::string_view error_code_name(ErrorCode code);

// Every module error carries a machine-readable code; the CLI maps it to an
// error JSON document and exit status.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
    if (!condition) fail(code, message);
}

}  // namespace uqkit
