#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tasklens/format.hpp"
#include "tasklens/model_ir.hpp"

namespace tasklens {

// Pricing parameters for one accelerator. Units: ms, bytes, microjoules.
struct HardwareProfile {
    std::string name;
    double bandwidth = 0;           // bytes per ms
    double convert_throughput = 0;  // elements per ms
    double energy_per_byte = 0;     // uJ per byte
    double sparse_compute_efficiency = 0;
    int engines = 1;
    std::vector<NumericFormat> io_formats;
    std::vector<NumericFormat> kernel_formats;
    std::vector<double> sparsity_levels;
    std::vector<TaskKind> high_precision_kinds;
    // [kind][format] macs per ms; nullopt = unsupported or missing.
    std::array<std::array<std::optional<double>, kAllFormats.size()>, kAllKinds.size()> throughput{};

    [[nodiscard]] std::optional<double> throughput_for(TaskKind k, NumericFormat f) const;
    [[nodiscard]] bool supports(TaskKind k, NumericFormat f) const { return throughput_for(k, f).has_value(); }
    [[nodiscard]] bool is_high_precision(TaskKind k) const;
};

HardwareProfile profile_from_json(const nlohmann::json& doc);
nlohmann::json profile_to_json(const HardwareProfile& p);
HardwareProfile load_profile(const std::filesystem::path& path);
// The bundled generic-npu-v1 profile, compiled in from profiles/generic-npu-v1.json.
const HardwareProfile& default_profile();

struct TaskConfig {
    NumericFormat input_format = NumericFormat::fp16;
    NumericFormat output_format = NumericFormat::fp16;
    NumericFormat kernel_format = NumericFormat::fp16;
    double sparsity = 0.0;
    int palette_bits = 0;

    friend bool operator==(const TaskConfig&, const TaskConfig&) = default;
};

struct TaskMetrics {
    double latency = 0;              // ms
    double compute_time = 0;         // ms
    double memory_time = 0;          // ms
    double conversion_overhead = 0;  // ms
    std::uint64_t bytes_moved = 0;
    std::uint64_t weight_bytes = 0;
    double energy = 0;        // uJ
    double memory_power = 0;  // mW
    double macs_effective = 0;

    friend bool operator==(const TaskMetrics&, const TaskMetrics&) = default;
};

struct ModelSummary {
    double total_latency = 0;
    double total_energy = 0;
    double memory_power = 0;
    std::uint64_t total_weight_bytes = 0;
    std::uint64_t total_bytes_moved = 0;
    std::optional<double> achieved_fps;
    std::size_t task_count = 0;

    friend bool operator==(const ModelSummary&, const ModelSummary&) = default;
};

std::uint64_t weight_bytes(std::int64_t weight_count, const TaskConfig& cfg);

// Weight-side settings of one task; the I/O side is given per tensor.
struct KernelConfig {
    NumericFormat kernel_format = NumericFormat::fp16;
    double sparsity = 0.0;
    int palette_bits = 0;

    friend bool operator==(const KernelConfig&, const KernelConfig&) = default;
};

// Prices a task whose input/output tensors carry individual formats. The
// compute format of a weightless task is the format of its first input
// (first output when it has no inputs).
TaskMetrics price_task(const HardwareTask& task, const ModelGraph& g,
                       std::span<const NumericFormat> input_formats,
                       std::span<const NumericFormat> output_formats,
                       const KernelConfig& kernel, const HardwareProfile& p);

// Prices a task with every input at cfg.input_format and every output at
// cfg.output_format.
TaskMetrics estimate_task(const HardwareTask& task, const ModelGraph& g,
                          const TaskConfig& cfg, const HardwareProfile& p);

ModelSummary summarize(std::span<const TaskMetrics> per_task);
// engines > 1 takes total latency from the list-schedule makespan.
ModelSummary summarize(const ModelGraph& g, std::span<const TaskMetrics> per_task, int engines);

// 100 * (base - updated) / base; positive means a decrease.
double percent_delta(double base, double updated);
// Same, but 0 when both are zero (weightless tasks, empty models).
double percent_delta_or_zero(double base, double updated);
// Display rounding: two decimals, halves away from zero.
double round_percent(double pct);

nlohmann::json metrics_to_json(const TaskMetrics& m);
nlohmann::json summary_to_json(const ModelSummary& s);
nlohmann::json config_to_json(const TaskConfig& c);

}  // namespace tasklens
