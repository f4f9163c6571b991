#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace tasklens {

enum class ErrorCode {
    MissingMember,
    SchemaError,
    ValidationError,
    Underivable,
    UnsupportedFormat,
    UnknownTask,
    DivisionByZero,
    NotFound,
    PathRejected,
    TooLarge,
    AccessDenied,
    UnknownModel,
    UnknownAnalysis,
    StorageFull,
    CycleDetected,
    Io,
    Usage,
};

std::string_view error_code_name(ErrorCode code);

// Every failure surfaced by the library. `detail` carries structured context
// (JSON pointer, violation list, offending task id) for the API layer.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, nlohmann::json detail = nullptr)
        : std::runtime_error(message), code_(code), detail_(std::move(detail)) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }
    [[nodiscard]] const nlohmann::json& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    nlohmann::json detail_;
};

}  // namespace tasklens
