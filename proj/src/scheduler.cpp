#include "tasklens/scheduler.hpp"

#include <algorithm>
#include <set>

#include "tasklens/error.hpp"

namespace tasklens {

using nlohmann::json;

Schedule schedule(const ModelGraph& g, std::span<const TaskMetrics> metrics, int engines) {
    std::vector<double> lat(metrics.size());
    std::transform(metrics.begin(), metrics.end(), lat.begin(), [](const TaskMetrics& m) { return m.latency; });
    return schedule(g, lat, engines);
}

Schedule schedule(const ModelGraph& g, std::span<const double> latencies, int engines) {
    if (engines < 1) throw Error(ErrorCode::Usage, "engines must be >= 1");
    const std::size_t n = g.tasks.size();
    if (latencies.size() != n) throw Error(ErrorCode::Usage, "latencies must cover every task");

    std::vector<std::vector<std::size_t>> succ(n);
    std::vector<std::size_t> pending(n, 0);
    for (std::size_t t = 0; t < n; ++t) {
        succ[t] = g.successors(t);
        for (auto s : succ[t]) ++pending[s];
    }
    std::set<std::size_t> ready;
    for (std::size_t t = 0; t < n; ++t) {
        if (pending[t] == 0) ready.insert(t);
    }

    std::vector<double> ready_at(n, 0.0);
    std::vector<double> engine_free(static_cast<std::size_t>(engines), 0.0);
    Schedule out;
    out.entries.reserve(n);
    while (!ready.empty()) {
        const std::size_t t = *ready.begin();
        ready.erase(ready.begin());
        auto engine = static_cast<std::size_t>(
            std::min_element(engine_free.begin(), engine_free.end()) - engine_free.begin());
        const double start = std::max(engine_free[engine], ready_at[t]);
        const double finish = start + latencies[t];
        engine_free[engine] = finish;
        out.entries.push_back(ScheduleEntry{g.tasks[t].id, static_cast<int>(engine), start, finish});
        out.makespan = std::max(out.makespan, finish);
        for (auto s : succ[t]) {
            ready_at[s] = std::max(ready_at[s], finish);
            if (--pending[s] == 0) ready.insert(s);
        }
    }
    if (out.entries.size() != n) {
        throw Error(ErrorCode::CycleDetected, "task graph has a cycle; cannot schedule");
    }
    std::stable_sort(out.entries.begin(), out.entries.end(), [](const ScheduleEntry& a, const ScheduleEntry& b) {
        if (a.start != b.start) return a.start < b.start;
        return a.task < b.task;
    });
    return out;
}

double critical_path(const ModelGraph& g, std::span<const double> latencies) {
    auto order = topological_order(g);
    if (!order) throw Error(ErrorCode::CycleDetected, "task graph has a cycle");
    std::vector<double> finish(g.tasks.size(), 0.0);
    double best = 0.0;
    for (auto t : *order) {
        double start = 0.0;
        for (auto p : g.predecessors(t)) start = std::max(start, finish[p]);
        finish[t] = start + latencies[t];
        best = std::max(best, finish[t]);
    }
    return best;
}

json timeline_to_json(const Schedule& s) {
    json rows = json::array();
    for (const auto& e : s.entries) {
        rows.push_back(json{{"task", e.task}, {"engine", e.engine}, {"start", e.start}, {"finish", e.finish}});
    }
    return rows;
}

}  // namespace tasklens
