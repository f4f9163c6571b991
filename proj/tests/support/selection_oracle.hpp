#pragma once

// Independent replays of selections, shared by unit and acceptance tests.

#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "oracle.hpp"
#include "tasklens/optimizer.hpp"

namespace selection_oracle {

using namespace tasklens;

inline std::string fname(NumericFormat f) { return std::string(to_string(f)); }

// Replays a selection over a plain tensor->format map: preset writes every
// task's tensors in id order, then targeted entries in list order.
inline std::map<std::string, std::string> replay(const ModelGraph& g, const OptimizationSelection& s) {
    std::map<std::string, std::string> f;
    for (const auto& t : g.tensors) f[t.id] = fname(t.format);
    if (s.preset == Preset::int8_io_kernel || s.preset == Preset::fp16_baseline) {
        const auto to = s.preset == Preset::int8_io_kernel ? "int8" : "fp16";
        for (const auto& t : g.tasks) {
            for (const auto& id : t.inputs) f[id] = to;
            for (const auto& id : t.outputs) f[id] = to;
        }
    }
    for (const auto& o : s.targeted) {
        const auto& t = g.tasks[static_cast<std::size_t>(o.task)];
        if (o.input) for (const auto& id : t.inputs) f[id] = fname(*o.input);
        if (o.output) for (const auto& id : t.outputs) f[id] = fname(*o.output);
    }
    return f;
}

inline std::set<TaskId> touching_changed(const ModelGraph& g, const std::map<std::string, std::string>& after) {
    std::set<TaskId> out;
    for (const auto& t : g.tasks) {
        for (const auto* list : {&t.inputs, &t.outputs}) {
            for (const auto& id : *list) {
                if (after.at(id) != fname(g.find_tensor(id)->format)) out.insert(t.id);
            }
        }
    }
    return out;
}

// Options the toy planner may use: uniform I/O+kernel format, two sparsities.
inline bool toy_allowed(const HardwareTask&, const TaskConfig& c) {
    return c.input_format == c.output_format && c.input_format == c.kernel_format &&
           (c.input_format == NumericFormat::fp16 || c.input_format == NumericFormat::int8) &&
           (c.sparsity == 0.0 || c.sparsity == 0.5);
}

inline std::vector<std::optional<TaskConfig>> toy_choices(const HardwareTask& t) {
    std::vector<std::optional<TaskConfig>> out{std::nullopt};
    for (auto f : {NumericFormat::fp16, NumericFormat::int8}) {
        for (double s : {0.0, 0.5}) {
            if (!t.has_weights() && s != t.sparsity) continue;
            TaskConfig c{f, f, t.has_weights() ? f : t.kernel_format, s, 0};
            if (toy_allowed(t, c)) out.push_back(c);
        }
    }
    return out;
}

// Best latency over every assignment of {untouched, allowed option} to each task,
// applied in id order. Priced with the formula oracle, not the simulator.
inline double exhaustive_best(const ModelGraph& g) {
    const auto& op = oracle::default_profile();
    auto mirror = oracle::mirror(g);
    std::vector<std::vector<std::optional<TaskConfig>>> choices;
    for (const auto& t : g.tasks) choices.push_back(toy_choices(t));
    std::vector<std::size_t> pick(g.tasks.size(), 0);
    double best = INFINITY;
    while (true) {
        auto formats = mirror.formats;
        std::vector<oracle::Kernel> kernels;
        for (std::size_t t = 0; t < g.tasks.size(); ++t) {
            kernels.push_back(oracle::kernel_of(g.tasks[t]));
            if (const auto& c = choices[t][pick[t]]) {
                for (const auto& id : g.tasks[t].inputs) formats[id] = fname(c->input_format);
                for (const auto& id : g.tasks[t].outputs) formats[id] = fname(c->output_format);
                kernels[t] = {fname(c->kernel_format), c->sparsity, 0};
            }
        }
        double total = 0;
        bool ok = true;
        for (std::size_t t = 0; t < g.tasks.size() && ok; ++t) {
            auto m = oracle::price_in(mirror, t, formats, kernels[t], op);
            if (!m) ok = false;
            else total += m->latency;
        }
        if (ok) best = std::min(best, total);
        std::size_t i = 0;
        while (i < pick.size() && ++pick[i] == choices[i].size()) pick[i++] = 0;
        if (i == pick.size()) break;
    }
    return best;
}


}  // namespace selection_oracle
