#include "tasklens/diff.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

namespace tasklens {

using nlohmann::json;

namespace {

bool differs(double a, double b) {
    const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
    return std::abs(a - b) / scale > 1e-12;
}

bool metrics_differ(const TaskMetrics& a, const TaskMetrics& b) {
    return differs(a.latency, b.latency) || differs(a.compute_time, b.compute_time) ||
           differs(a.memory_time, b.memory_time) || differs(a.conversion_overhead, b.conversion_overhead) ||
           differs(static_cast<double>(a.bytes_moved), static_cast<double>(b.bytes_moved)) ||
           differs(static_cast<double>(a.weight_bytes), static_cast<double>(b.weight_bytes)) ||
           differs(a.energy, b.energy) || differs(a.memory_power, b.memory_power) ||
           differs(a.macs_effective, b.macs_effective);
}

std::map<std::string, int> name_counts(const ModelGraph& g) {
    std::map<std::string, int> c;
    for (const auto& t : g.tasks) ++c[t.name];
    return c;
}

}  // namespace

DiffResult diff_models(const PricedModel& base, const PricedModel& target) {
    const auto& bg = base.graph;
    const auto& tg = target.graph;
    std::vector<int> base_match(bg.tasks.size(), -1);
    std::vector<bool> target_used(tg.tasks.size(), false);
    std::vector<MatchPass> pass_of(bg.tasks.size(), MatchPass::name);

    const auto bc = name_counts(bg);
    const auto tc = name_counts(tg);
    std::map<std::string, std::size_t> target_by_name;
    for (std::size_t t = 0; t < tg.tasks.size(); ++t) {
        if (tc.at(tg.tasks[t].name) == 1) target_by_name[tg.tasks[t].name] = t;
    }
    for (std::size_t b = 0; b < bg.tasks.size(); ++b) {
        const auto& name = bg.tasks[b].name;
        if (bc.at(name) != 1) continue;
        auto it = target_by_name.find(name);
        if (it == target_by_name.end()) continue;
        base_match[b] = static_cast<int>(it->second);
        target_used[it->second] = true;
    }

    using Key = std::tuple<TaskKind, std::int64_t, std::int64_t>;
    std::map<Key, std::vector<std::size_t>> free_targets;
    for (std::size_t t = 0; t < tg.tasks.size(); ++t) {
        if (target_used[t]) continue;
        const auto& task = tg.tasks[t];
        free_targets[{task.kind, task.weight_count, task.work()}].push_back(t);
    }
    for (auto& [key, list] : free_targets) std::reverse(list.begin(), list.end());  // pop lowest id from back
    for (std::size_t b = 0; b < bg.tasks.size(); ++b) {
        if (base_match[b] >= 0) continue;
        const auto& task = bg.tasks[b];
        auto it = free_targets.find({task.kind, task.weight_count, task.work()});
        if (it == free_targets.end() || it->second.empty()) continue;
        base_match[b] = static_cast<int>(it->second.back());
        it->second.pop_back();
        target_used[static_cast<std::size_t>(base_match[b])] = true;
        pass_of[b] = MatchPass::structure;
    }

    DiffResult r;
    for (std::size_t b = 0; b < bg.tasks.size(); ++b) {
        if (base_match[b] < 0) {
            r.removed.push_back(bg.tasks[b].id);
            continue;
        }
        const auto t = static_cast<std::size_t>(base_match[b]);
        const auto& mb = base.metrics[b];
        const auto& mt = target.metrics[t];
        TaskMatch m;
        m.base = bg.tasks[b].id;
        m.target = tg.tasks[t].id;
        m.pass = pass_of[b];
        m.changed = metrics_differ(mb, mt) || !(base.configs[b] == target.configs[t]);
        m.delta_latency_pct = percent_delta_or_zero(mb.latency, mt.latency);
        m.delta_energy_pct = percent_delta_or_zero(mb.energy, mt.energy);
        m.delta_power_pct = percent_delta_or_zero(mb.memory_power, mt.memory_power);
        m.delta_bytes_pct = percent_delta_or_zero(static_cast<double>(mb.bytes_moved), static_cast<double>(mt.bytes_moved));
        m.delta_weight_bytes_pct =
            percent_delta_or_zero(static_cast<double>(mb.weight_bytes), static_cast<double>(mt.weight_bytes));
        r.matched.push_back(m);
    }
    for (std::size_t t = 0; t < tg.tasks.size(); ++t) {
        if (!target_used[t]) r.added.push_back(tg.tasks[t].id);
    }
    r.summary_base = summarize(base.metrics);
    r.summary_target = summarize(target.metrics);
    return r;
}

DiffResult diff_models(const ModelGraph& base, const OptimizationSelection& base_sel, const ModelGraph& target,
                       const OptimizationSelection& target_sel, const HardwareProfile& p) {
    auto collect = [&](const ModelGraph& g, const OptimizationSelection& sel) {
        auto sim = simulate(g, sel, p);
        std::pair<std::vector<TaskMetrics>, std::vector<EffectiveConfig>> out;
        for (auto& tr : sim.per_task) {
            out.first.push_back(tr.optimized);
            out.second.push_back(tr.effective);
        }
        return out;
    };
    auto [bm, bcfg] = collect(base, base_sel);
    auto [tm, tcfg] = collect(target, target_sel);
    return diff_models(PricedModel{base, bm, bcfg}, PricedModel{target, tm, tcfg});
}

json diff_to_json(const DiffResult& d) {
    json matched = json::array();
    for (const auto& m : d.matched) {
        matched.push_back(json{{"base", m.base},
                               {"target", m.target},
                               {"matched_by", m.pass == MatchPass::name ? "name" : "structure"},
                               {"changed", m.changed},
                               {"delta_latency_pct", round_percent(m.delta_latency_pct)},
                               {"delta_energy_pct", round_percent(m.delta_energy_pct)},
                               {"delta_power_pct", round_percent(m.delta_power_pct)},
                               {"delta_bytes_pct", round_percent(m.delta_bytes_pct)},
                               {"delta_weight_bytes_pct", round_percent(m.delta_weight_bytes_pct)}});
    }
    return json{{"matched", std::move(matched)},
                {"added", d.added},
                {"removed", d.removed},
                {"summary_base", summary_to_json(d.summary_base)},
                {"summary_target", summary_to_json(d.summary_target)}};
}

}  // namespace tasklens
