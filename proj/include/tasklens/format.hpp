#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace tasklens {

enum class NumericFormat : std::uint8_t { fp32, fp16, int8, int4, int2 };

inline constexpr std::array<NumericFormat, 5> kAllFormats = {
    NumericFormat::fp32, NumericFormat::fp16, NumericFormat::int8,
    NumericFormat::int4, NumericFormat::int2};

constexpr int bits(NumericFormat f) {
    switch (f) {
        case NumericFormat::fp32: return 32;
        case NumericFormat::fp16: return 16;
        case NumericFormat::int8: return 8;
        case NumericFormat::int4: return 4;
        case NumericFormat::int2: return 2;
    }
    return 0;
}

constexpr bool is_integer(NumericFormat f) {
    return f == NumericFormat::int8 || f == NumericFormat::int4 || f == NumericFormat::int2;
}

std::string_view to_string(NumericFormat f);
std::optional<NumericFormat> parse_format(std::string_view s);

enum class TaskKind : std::uint8_t {
    conv2d,
    matmul,
    pool,
    elementwise,
    concat,
    resize,
    softmax,
    layernorm,
    convert,
};

inline constexpr std::array<TaskKind, 9> kAllKinds = {
    TaskKind::conv2d,  TaskKind::matmul,  TaskKind::pool,
    TaskKind::elementwise, TaskKind::concat, TaskKind::resize,
    TaskKind::softmax, TaskKind::layernorm, TaskKind::convert};

std::string_view to_string(TaskKind k);
std::optional<TaskKind> parse_kind(std::string_view s);

// Bytes needed to hold `count` values at `bits_per_value`, rounded up.
constexpr std::uint64_t packed_bytes(std::uint64_t count, int bits_per_value) {
    return (count * static_cast<std::uint64_t>(bits_per_value) + 7) / 8;
}

}  // namespace tasklens
