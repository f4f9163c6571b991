#include "tasklens/format.hpp"

#include "tasklens/error.hpp"

namespace tasklens {

std::string_view to_string(NumericFormat f) {
    switch (f) {
        case NumericFormat::fp32: return "fp32";
        case NumericFormat::fp16: return "fp16";
        case NumericFormat::int8: return "int8";
        case NumericFormat::int4: return "int4";
        case NumericFormat::int2: return "int2";
    }
    return "?";
}

std::optional<NumericFormat> parse_format(std::string_view s) {
    for (auto f : kAllFormats) {
        if (to_string(f) == s) return f;
    }
    return std::nullopt;
}

std::string_view to_string(TaskKind k) {
    switch (k) {
        case TaskKind::conv2d: return "conv2d";
        case TaskKind::matmul: return "matmul";
        case TaskKind::pool: return "pool";
        case TaskKind::elementwise: return "elementwise";
        case TaskKind::concat: return "concat";
        case TaskKind::resize: return "resize";
        case TaskKind::softmax: return "softmax";
        case TaskKind::layernorm: return "layernorm";
        case TaskKind::convert: return "convert";
    }
    return "?";
}

std::optional<TaskKind> parse_kind(std::string_view s) {
    for (auto k : kAllKinds) {
        if (to_string(k) == s) return k;
    }
    return std::nullopt;
}

std::string_view error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::MissingMember: return "MissingMember";
        case ErrorCode::SchemaError: return "SchemaError";
        case ErrorCode::ValidationError: return "ValidationError";
        case ErrorCode::Underivable: return "Underivable";
        case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
        case ErrorCode::UnknownTask: return "UnknownTask";
        case ErrorCode::DivisionByZero: return "DivisionByZero";
        case ErrorCode::NotFound: return "NotFound";
        case ErrorCode::PathRejected: return "PathRejected";
        case ErrorCode::TooLarge: return "TooLarge";
        case ErrorCode::AccessDenied: return "AccessDenied";
        case ErrorCode::UnknownModel: return "UnknownModel";
        case ErrorCode::UnknownAnalysis: return "UnknownAnalysis";
        case ErrorCode::StorageFull: return "StorageFull";
        case ErrorCode::CycleDetected: return "CycleDetected";
        case ErrorCode::Io: return "Io";
        case ErrorCode::Usage: return "Usage";
    }
    return "Unknown";
}

}  // namespace tasklens
