#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tasklens/cost_model.hpp"
#include "tasklens/model_ir.hpp"

namespace tasklens {

enum class Preset {
    int8_io_kernel,
    int8_kernel_only,
    prune_50,
    prune_75,
    palettize_4bit,
    fp16_baseline,
};

inline constexpr std::array<Preset, 6> kAllPresets = {
    Preset::int8_io_kernel, Preset::int8_kernel_only, Preset::prune_50,
    Preset::prune_75,       Preset::palettize_4bit,   Preset::fp16_baseline};

std::string_view preset_id(Preset p);
std::string_view preset_description(Preset p);
std::optional<Preset> parse_preset(std::string_view id);
TaskConfig apply_preset(Preset preset, const TaskConfig& cfg);

// One targeted entry. Absent fields keep whatever the task currently has,
// so "set B's input to int8" does not also rewrite B's output tensors.
struct TaskOverride {
    TaskId task = 0;
    std::optional<NumericFormat> input;
    std::optional<NumericFormat> output;
    std::optional<NumericFormat> kernel;
    std::optional<double> sparsity;
    std::optional<int> palette_bits;

    static TaskOverride full(TaskId task, const TaskConfig& cfg);
    friend bool operator==(const TaskOverride&, const TaskOverride&) = default;
};

struct OptimizationSelection {
    std::optional<Preset> preset;
    std::vector<TaskOverride> targeted;

    [[nodiscard]] bool empty() const noexcept { return !preset && targeted.empty(); }
    friend bool operator==(const OptimizationSelection&, const OptimizationSelection&) = default;
};

nlohmann::json selection_to_json(const OptimizationSelection& s);
OptimizationSelection selection_from_json(const nlohmann::json& doc);
std::string selection_digest(const OptimizationSelection& s);

// Per-tensor view of a task's configuration after propagation.
struct EffectiveConfig {
    std::vector<NumericFormat> inputs;
    std::vector<NumericFormat> outputs;
    KernelConfig kernel;

    // Collapsed to one TaskConfig using the first input / first output.
    [[nodiscard]] TaskConfig summary(NumericFormat fallback) const;
    friend bool operator==(const EffectiveConfig&, const EffectiveConfig&) = default;
};

struct FormatConflict {
    std::string tensor;
    TaskId earlier_task = 0;
    TaskId later_task = 0;
    NumericFormat earlier = NumericFormat::fp16;
    NumericFormat later = NumericFormat::fp16;
};

struct PropagationResult {
    std::map<std::string, NumericFormat> tensor_formats;
    std::vector<std::string> changed_tensors;  // ascending
    std::vector<TaskId> affected;              // ascending
    std::vector<FormatConflict> conflicts;
};

PropagationResult propagate_formats(const ModelGraph& g, const OptimizationSelection& selection);

struct TaskResult {
    TaskMetrics baseline;
    TaskMetrics optimized;
    EffectiveConfig baseline_config;
    EffectiveConfig effective;
    bool changed = false;
};

struct SimulationResult {
    std::vector<TaskResult> per_task;
    ModelSummary summary_base;
    ModelSummary summary_opt;
    std::vector<TaskId> affected_task_ids;
    std::vector<FormatConflict> conflicts;
    double delta_power_pct = 0;
    double delta_latency_pct = 0;
};

struct OptimizationOption {
    TaskConfig cfg;
    TaskMetrics metrics;         // the task itself under this option
    double latency_savings = 0;  // whole-model ms saved vs the current selection
    double delta_latency_pct = 0;
    double delta_power_pct = 0;
    double delta_weight_bytes_pct = 0;
};

// Prices selections against one graph and profile. Baseline metrics are
// computed once at construction; every call is a pure function of its
// arguments and may run concurrently.
class Simulator {
public:
    Simulator(const ModelGraph& g, const HardwareProfile& p);

    [[nodiscard]] SimulationResult simulate(const OptimizationSelection& selection) const;
    [[nodiscard]] double total_latency(const OptimizationSelection& selection) const;
    [[nodiscard]] std::vector<OptimizationOption> enumerate_options(
        TaskId task, const OptimizationSelection& current) const;

    [[nodiscard]] const ModelGraph& graph() const noexcept { return graph_; }
    [[nodiscard]] const HardwareProfile& profile() const noexcept { return profile_; }
    [[nodiscard]] const std::vector<TaskMetrics>& baseline() const noexcept { return baseline_; }
    [[nodiscard]] const ModelSummary& baseline_summary() const noexcept { return baseline_summary_; }

    struct State {
        std::vector<NumericFormat> tensor_formats;
        std::vector<KernelConfig> kernels;
        std::vector<int> last_writer;  // per tensor, task id or -1
        std::vector<FormatConflict> conflicts;
    };
    [[nodiscard]] State apply(const OptimizationSelection& selection) const;
    [[nodiscard]] TaskMetrics price(std::size_t task, const State& state) const;
    [[nodiscard]] EffectiveConfig effective(std::size_t task, const State& state) const;

private:
    void apply_override(State& state, const TaskOverride& o) const;
    void check_task(TaskId id) const;

    const ModelGraph& graph_;
    const HardwareProfile& profile_;
    State base_state_;
    std::vector<TaskMetrics> baseline_;
    ModelSummary baseline_summary_;
};

SimulationResult simulate(const ModelGraph& g, const OptimizationSelection& selection,
                          const HardwareProfile& p);

std::vector<OptimizationOption> enumerate_options(const ModelGraph& g, TaskId task,
                                                  const OptimizationSelection& current,
                                                  const HardwareProfile& p);

using OptionFilter = std::function<bool(const HardwareTask&, const TaskConfig&)>;

enum class PlanStatus { met, infeasible };

struct PlanResult {
    PlanStatus status = PlanStatus::infeasible;
    OptimizationSelection selection;  // best effort when infeasible
    double latency = 0;
};

PlanResult plan_to_budget(const ModelGraph& g, const HardwareProfile& p, double latency_budget,
                          const OptionFilter& allowed = {});

nlohmann::json option_to_json(const OptimizationOption& o);
nlohmann::json simulation_to_json(const ModelGraph& g, const SimulationResult& r);

}  // namespace tasklens
