#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tasklens/cost_model.hpp"
#include "tasklens/model_ir.hpp"
#include "tasklens/optimizer.hpp"

namespace tasklens {

struct PricedModel {
    const ModelGraph& graph;
    std::span<const TaskMetrics> metrics;
    std::span<const EffectiveConfig> configs;
};

enum class MatchPass { name, structure };

struct TaskMatch {
    TaskId base = 0;
    TaskId target = 0;
    MatchPass pass = MatchPass::name;
    bool changed = false;
    double delta_latency_pct = 0;
    double delta_energy_pct = 0;
    double delta_power_pct = 0;
    double delta_bytes_pct = 0;
    double delta_weight_bytes_pct = 0;
};

struct DiffResult {
    std::vector<TaskMatch> matched;  // ascending base id
    std::vector<TaskId> added;
    std::vector<TaskId> removed;
    ModelSummary summary_base;
    ModelSummary summary_target;
};

DiffResult diff_models(const PricedModel& base, const PricedModel& target);

// Convenience: simulate both sides and diff.
DiffResult diff_models(const ModelGraph& base, const OptimizationSelection& base_sel,
                       const ModelGraph& target, const OptimizationSelection& target_sel,
                       const HardwareProfile& p);

nlohmann::json diff_to_json(const DiffResult& d);

}  // namespace tasklens
