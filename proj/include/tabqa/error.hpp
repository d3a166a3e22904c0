// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace tabqa {

enum class ErrorCode {
    ParseError,
    SchemaError,
    UnknownColumn,
    DuplicateColumn,
    IndexOutOfRange,
    ConditionParseError,
    ConditionTypeError,
    TypeMismatch,
    NonNumericAggregate,
    DivisionByZero,
    ConversionError,
    UnparseableDatetime,
    UnknownTimezone,
    IncomparableKeyTypes,
    StrategyTypeError,
    UnknownTableRef,
    LengthMismatch,
    NoActionFound,
    UnknownTool,
    ArgumentSchemaError,
    BackendTimeout,
    RateLimited,
    PolicyError,
    ConfidenceUnavailable,
    NoAnswerAvailable,
    ManifestError,
    LoadError,
    ConfigError,
};

const char* error_code_name(ErrorCode code);

/// Single exception type for the whole engine; `code` keeps errors
/// machine-checkable, `detail` carries the offending name/row/offset.
class TabError : public std::runtime_error {
  public:
    TabError(ErrorCode code, std::string message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
          code_(code) {}

    ErrorCode code() const { return code_; }

  private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw TabError(code, message);
}

} // namespace tabqa
