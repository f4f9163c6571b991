#pragma once

#include <span>
#include <vector>

#include <json.hpp>

#include "tasklens/cost_model.hpp"
#include "tasklens/model_ir.hpp"

namespace tasklens {

struct ScheduleEntry {
    TaskId task = 0;
    int engine = 0;
    double start = 0;
    double finish = 0;
};

struct Schedule {
    std::vector<ScheduleEntry> entries;  // sorted by start, then task id
    double makespan = 0;
};

// List scheduling: lowest-id ready task goes to the earliest-free engine.
Schedule schedule(const ModelGraph& g, std::span<const TaskMetrics> metrics, int engines);
Schedule schedule(const ModelGraph& g, std::span<const double> latencies, int engines);

// Longest latency-weighted path; a lower bound on any makespan.
double critical_path(const ModelGraph& g, std::span<const double> latencies);

nlohmann::json timeline_to_json(const Schedule& s);

}  // namespace tasklens
