#include "tasklens/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <fmt/format.h>

#include "tasklens/error.hpp"

namespace tasklens {

using nlohmann::json;

std::string_view preset_id(Preset p) {
    switch (p) {
        case Preset::int8_io_kernel: return "int8-io-kernel";
        case Preset::int8_kernel_only: return "int8-kernel-only";
        case Preset::prune_50: return "prune-50";
        case Preset::prune_75: return "prune-75";
        case Preset::palettize_4bit: return "palettize-4bit";
        case Preset::fp16_baseline: return "fp16-baseline";
    }
    return "?";
}

std::string_view preset_description(Preset p) {
    switch (p) {
        case Preset::int8_io_kernel: return "Quantize every task's inputs, outputs and weights to int8";
        case Preset::int8_kernel_only: return "Quantize weights to int8, keep activations as they are";
        case Preset::prune_50: return "Prune 50% of every task's weights";
        case Preset::prune_75: return "Prune 75% of every task's weights";
        case Preset::palettize_4bit: return "Palettize weights to a 16-entry (4-bit) lookup table";
        case Preset::fp16_baseline: return "Reset everything to dense fp16";
    }
    return "";
}

std::optional<Preset> parse_preset(std::string_view id) {
    for (auto p : kAllPresets) {
        if (preset_id(p) == id) return p;
    }
    return std::nullopt;
}

TaskConfig apply_preset(Preset preset, const TaskConfig& cfg) {
    TaskConfig out = cfg;
    switch (preset) {
        case Preset::int8_io_kernel:
            out.input_format = out.output_format = out.kernel_format = NumericFormat::int8;
            break;
        case Preset::int8_kernel_only:
            out.kernel_format = NumericFormat::int8;
            break;
        case Preset::prune_50:
            out.sparsity = 0.5;
            out.palette_bits = 0;
            break;
        case Preset::prune_75:
            out.sparsity = 0.75;
            out.palette_bits = 0;
            break;
        case Preset::palettize_4bit:
            out.palette_bits = 4;
            out.sparsity = 0.0;
            break;
        case Preset::fp16_baseline:
            out = TaskConfig{};
            break;
    }
    return out;
}

namespace {

bool preset_touches_io(Preset p) { return p == Preset::int8_io_kernel || p == Preset::fp16_baseline; }

[[noreturn]] void selection_fail(const std::string& ptr, const std::string& what) {
    throw Error(ErrorCode::SchemaError, fmt::format("selection: {} at {}", what, ptr), json{{"pointer", ptr}});
}

}  // namespace

TaskOverride TaskOverride::full(TaskId task, const TaskConfig& cfg) {
    return TaskOverride{task, cfg.input_format, cfg.output_format, cfg.kernel_format, cfg.sparsity, cfg.palette_bits};
}

json selection_to_json(const OptimizationSelection& s) {
    json doc = json::object();
    if (s.preset) doc["preset"] = preset_id(*s.preset);
    json targeted = json::array();
    for (const auto& o : s.targeted) {
        json e{{"task", o.task}};
        if (o.input) e["input"] = to_string(*o.input);
        if (o.output) e["output"] = to_string(*o.output);
        if (o.kernel) e["kernel"] = to_string(*o.kernel);
        if (o.sparsity) e["sparsity"] = *o.sparsity;
        if (o.palette_bits) e["palette_bits"] = *o.palette_bits;
        targeted.push_back(std::move(e));
    }
    doc["targeted"] = std::move(targeted);
    return doc;
}

OptimizationSelection selection_from_json(const json& doc) {
    if (!doc.is_object()) selection_fail("/", "expected object");
    OptimizationSelection s;
    if (auto it = doc.find("preset"); it != doc.end() && !it->is_null()) {
        if (!it->is_string()) selection_fail("/preset", "expected string");
        s.preset = parse_preset(it->get<std::string>());
        if (!s.preset) selection_fail("/preset", fmt::format("unknown preset \"{}\"", it->get<std::string>()));
    }
    auto targeted = doc.find("targeted");
    if (targeted == doc.end() || targeted->is_null()) return s;
    if (!targeted->is_array()) selection_fail("/targeted", "expected array");
    for (std::size_t i = 0; i < targeted->size(); ++i) {
        const auto& e = (*targeted)[i];
        const auto ptr = fmt::format("/targeted/{}", i);
        if (!e.is_object()) selection_fail(ptr, "expected object");
        TaskOverride o;
        if (!e.contains("task") || !e["task"].is_number_integer()) selection_fail(ptr + "/task", "expected integer");
        o.task = e["task"].get<TaskId>();
        auto fmt_field = [&](const char* key) -> std::optional<NumericFormat> {
            auto it = e.find(key);
            if (it == e.end() || it->is_null()) return std::nullopt;
            auto f = it->is_string() ? parse_format(it->get<std::string>()) : std::nullopt;
            if (!f) selection_fail(ptr + "/" + key, "unknown format");
            return f;
        };
        o.input = fmt_field("input");
        o.output = fmt_field("output");
        o.kernel = fmt_field("kernel");
        if (auto it = e.find("sparsity"); it != e.end() && !it->is_null()) {
            if (!it->is_number() || it->get<double>() < 0 || it->get<double>() >= 1) {
                selection_fail(ptr + "/sparsity", "expected number in [0,1)");
            }
            o.sparsity = it->get<double>();
        }
        if (auto it = e.find("palette_bits"); it != e.end() && !it->is_null()) {
            if (!it->is_number_integer() || it->get<int>() < 0 || it->get<int>() > 8) {
                selection_fail(ptr + "/palette_bits", "expected integer in 0..8");
            }
            o.palette_bits = it->get<int>();
        }
        s.targeted.push_back(o);
    }
    return s;
}

std::string selection_digest(const OptimizationSelection& s) { return sha256_hex(selection_to_json(s).dump()); }

TaskConfig EffectiveConfig::summary(NumericFormat fallback) const {
    TaskConfig c;
    c.input_format = inputs.empty() ? (outputs.empty() ? fallback : outputs.front()) : inputs.front();
    c.output_format = outputs.empty() ? fallback : outputs.front();
    c.kernel_format = kernel.kernel_format;
    c.sparsity = kernel.sparsity;
    c.palette_bits = kernel.palette_bits;
    return c;
}

namespace {

Simulator::State baseline_state(const ModelGraph& g) {
    Simulator::State s;
    s.tensor_formats.reserve(g.tensors.size());
    for (const auto& t : g.tensors) s.tensor_formats.push_back(t.format);
    s.kernels.reserve(g.tasks.size());
    for (const auto& t : g.tasks) s.kernels.push_back(KernelConfig{t.kernel_format, t.sparsity, t.palette_bits});
    s.last_writer.assign(g.tensors.size(), -1);
    return s;
}

void check_task_id(const ModelGraph& g, TaskId id) {
    if (id < 0 || static_cast<std::size_t>(id) >= g.tasks.size()) {
        throw Error(ErrorCode::UnknownTask, fmt::format("unknown task {}", id), json{{"task", id}});
    }
}

void write_format(const ModelGraph& g, Simulator::State& s, std::size_t tensor, NumericFormat f, TaskId writer) {
    const int prev = s.last_writer[tensor];
    if (prev >= 0 && prev != writer && s.tensor_formats[tensor] != f) {
        s.conflicts.push_back(FormatConflict{g.tensors[tensor].id, prev, writer, s.tensor_formats[tensor], f});
    }
    s.tensor_formats[tensor] = f;
    s.last_writer[tensor] = writer;
}

void apply_override_to(const ModelGraph& g, Simulator::State& s, const TaskOverride& o) {
    check_task_id(g, o.task);
    const auto pos = static_cast<std::size_t>(o.task);
    if (o.input) {
        for (auto tp : g.index.task_inputs[pos]) write_format(g, s, tp, *o.input, o.task);
    }
    if (o.output) {
        for (auto tp : g.index.task_outputs[pos]) write_format(g, s, tp, *o.output, o.task);
    }
    auto& k = s.kernels[pos];
    if (o.kernel) k.kernel_format = *o.kernel;
    if (o.sparsity) k.sparsity = *o.sparsity;
    if (o.palette_bits) k.palette_bits = *o.palette_bits;
}

Simulator::State apply_selection(const ModelGraph& g, const Simulator::State& base, const OptimizationSelection& sel) {
    Simulator::State s = base;
    if (sel.preset) {
        const bool io = preset_touches_io(*sel.preset);
        for (std::size_t t = 0; t < g.tasks.size(); ++t) {
            const auto& task = g.tasks[t];
            TaskConfig cur;
            cur.input_format = g.index.task_inputs[t].empty() ? NumericFormat::fp16
                                                              : s.tensor_formats[g.index.task_inputs[t].front()];
            cur.output_format = g.index.task_outputs[t].empty() ? NumericFormat::fp16
                                                                : s.tensor_formats[g.index.task_outputs[t].front()];
            cur.kernel_format = s.kernels[t].kernel_format;
            cur.sparsity = s.kernels[t].sparsity;
            cur.palette_bits = s.kernels[t].palette_bits;
            const TaskConfig next = apply_preset(*sel.preset, cur);
            TaskOverride o{task.id, std::nullopt, std::nullopt, next.kernel_format, next.sparsity, next.palette_bits};
            if (io) {
                o.input = next.input_format;
                o.output = next.output_format;
            }
            apply_override_to(g, s, o);
        }
        s.conflicts.clear();
        std::fill(s.last_writer.begin(), s.last_writer.end(), -1);
    }
    for (const auto& o : sel.targeted) apply_override_to(g, s, o);
    return s;
}

// Tasks sharing any tensor with `task`, including itself; ascending.
std::vector<std::size_t> neighborhood(const ModelGraph& g, std::size_t task) {
    std::vector<std::size_t> out{task};
    for (const auto* list : {&g.index.task_inputs[task], &g.index.task_outputs[task]}) {
        for (auto tp : *list) {
            if (g.index.producer[tp] != kNoProducer) out.push_back(g.index.producer[tp]);
            out.insert(out.end(), g.index.consumers[tp].begin(), g.index.consumers[tp].end());
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

}  // namespace

PropagationResult propagate_formats(const ModelGraph& g, const OptimizationSelection& selection) {
    const auto base = baseline_state(g);
    const auto s = apply_selection(g, base, selection);
    PropagationResult r;
    std::set<TaskId> affected;
    for (std::size_t tp = 0; tp < g.tensors.size(); ++tp) {
        r.tensor_formats[g.tensors[tp].id] = s.tensor_formats[tp];
        if (s.tensor_formats[tp] == base.tensor_formats[tp]) continue;
        r.changed_tensors.push_back(g.tensors[tp].id);
        if (g.index.producer[tp] != kNoProducer) affected.insert(g.tasks[g.index.producer[tp]].id);
        for (auto c : g.index.consumers[tp]) affected.insert(g.tasks[c].id);
    }
    std::sort(r.changed_tensors.begin(), r.changed_tensors.end());
    r.affected.assign(affected.begin(), affected.end());
    r.conflicts = s.conflicts;
    return r;
}

Simulator::Simulator(const ModelGraph& g, const HardwareProfile& p)
    : graph_(g), profile_(p), base_state_(baseline_state(g)) {
    baseline_.reserve(g.tasks.size());
    for (std::size_t t = 0; t < g.tasks.size(); ++t) baseline_.push_back(price(t, base_state_));
    baseline_summary_ = summarize(graph_, baseline_, profile_.engines);
}

void Simulator::check_task(TaskId id) const { check_task_id(graph_, id); }

void Simulator::apply_override(State& state, const TaskOverride& o) const { apply_override_to(graph_, state, o); }

Simulator::State Simulator::apply(const OptimizationSelection& selection) const {
    return apply_selection(graph_, base_state_, selection);
}

TaskMetrics Simulator::price(std::size_t task, const State& state) const {
    const auto& ins = graph_.index.task_inputs[task];
    const auto& outs = graph_.index.task_outputs[task];
    // Stack buffers cover the common case; fall back to the heap for wide tasks.
    std::array<NumericFormat, 8> in_buf{}, out_buf{};
    std::vector<NumericFormat> in_heap, out_heap;
    std::span<NumericFormat> in_fmt, out_fmt;
    if (ins.size() <= in_buf.size()) {
        in_fmt = std::span(in_buf.data(), ins.size());
    } else {
        in_heap.resize(ins.size());
        in_fmt = in_heap;
    }
    if (outs.size() <= out_buf.size()) {
        out_fmt = std::span(out_buf.data(), outs.size());
    } else {
        out_heap.resize(outs.size());
        out_fmt = out_heap;
    }
    for (std::size_t i = 0; i < ins.size(); ++i) in_fmt[i] = state.tensor_formats[ins[i]];
    for (std::size_t i = 0; i < outs.size(); ++i) out_fmt[i] = state.tensor_formats[outs[i]];
    return price_task(graph_.tasks[task], graph_, in_fmt, out_fmt, state.kernels[task], profile_);
}

EffectiveConfig Simulator::effective(std::size_t task, const State& state) const {
    EffectiveConfig c;
    for (auto tp : graph_.index.task_inputs[task]) c.inputs.push_back(state.tensor_formats[tp]);
    for (auto tp : graph_.index.task_outputs[task]) c.outputs.push_back(state.tensor_formats[tp]);
    // Weight settings are inert on weightless tasks.
    c.kernel = graph_.tasks[task].has_weights() ? state.kernels[task] : base_state_.kernels[task];
    return c;
}

SimulationResult Simulator::simulate(const OptimizationSelection& selection) const {
    const State state = apply(selection);
    SimulationResult r;
    const std::size_t n = graph_.tasks.size();
    r.per_task.resize(n);
    std::vector<TaskMetrics> optimized(n);
    std::set<TaskId> affected;
    for (std::size_t t = 0; t < n; ++t) {
        auto& tr = r.per_task[t];
        tr.baseline = baseline_[t];
        tr.optimized = optimized[t] = price(t, state);
        tr.baseline_config = effective(t, base_state_);
        tr.effective = effective(t, state);
        tr.changed = !(tr.effective == tr.baseline_config);
        if (tr.changed) affected.insert(graph_.tasks[t].id);
    }
    for (std::size_t tp = 0; tp < graph_.tensors.size(); ++tp) {
        if (state.tensor_formats[tp] == base_state_.tensor_formats[tp]) continue;
        if (graph_.index.producer[tp] != kNoProducer) affected.insert(graph_.tasks[graph_.index.producer[tp]].id);
        for (auto c : graph_.index.consumers[tp]) affected.insert(graph_.tasks[c].id);
    }
    r.affected_task_ids.assign(affected.begin(), affected.end());
    r.conflicts = state.conflicts;
    r.summary_base = baseline_summary_;
    r.summary_opt = summarize(graph_, optimized, profile_.engines);
    r.delta_power_pct = percent_delta_or_zero(r.summary_base.memory_power, r.summary_opt.memory_power);
    r.delta_latency_pct = percent_delta_or_zero(r.summary_base.total_latency, r.summary_opt.total_latency);
    return r;
}

double Simulator::total_latency(const OptimizationSelection& selection) const {
    const State state = apply(selection);
    std::vector<TaskMetrics> metrics(graph_.tasks.size());
    for (std::size_t t = 0; t < metrics.size(); ++t) metrics[t] = price(t, state);
    return summarize(graph_, metrics, profile_.engines).total_latency;
}

std::vector<OptimizationOption> Simulator::enumerate_options(TaskId task, const OptimizationSelection& current) const {
    check_task(task);
    const auto pos = static_cast<std::size_t>(task);
    const auto& hw = graph_.tasks[pos];
    State state = apply(current);
    const auto local = neighborhood(graph_, pos);

    double cur_latency = 0, cur_energy = 0;
    for (auto t : local) {
        auto m = price(t, state);
        cur_latency += m.latency;
        cur_energy += m.energy;
    }
    const double cur_power = cur_latency > 0 ? cur_energy / cur_latency : 0.0;
    const auto cur_weight_bytes = static_cast<double>(price(pos, state).weight_bytes);

    std::vector<NumericFormat> kernel_axis;
    std::vector<double> sparsity_axis;
    if (hw.has_weights()) {
        kernel_axis = profile_.kernel_formats;
        sparsity_axis = profile_.sparsity_levels;
    } else {
        kernel_axis = {state.kernels[pos].kernel_format};
        sparsity_axis = {state.kernels[pos].sparsity};
    }

    const auto saved_formats = state.tensor_formats;
    const auto saved_kernel = state.kernels[pos];
    std::vector<OptimizationOption> out;
    for (auto in : profile_.io_formats) {
        for (auto outf : profile_.io_formats) {
            for (auto k : kernel_axis) {
                for (auto s : sparsity_axis) {
                    for (auto tp : graph_.index.task_inputs[pos]) state.tensor_formats[tp] = in;
                    for (auto tp : graph_.index.task_outputs[pos]) state.tensor_formats[tp] = outf;
                    state.kernels[pos] = hw.has_weights() ? KernelConfig{k, s, 0} : saved_kernel;

                    OptimizationOption opt;
                    opt.cfg = TaskConfig{in, outf, state.kernels[pos].kernel_format, state.kernels[pos].sparsity,
                                         state.kernels[pos].palette_bits};
                    double lat = 0, energy = 0;
                    bool supported = true;
                    try {
                        for (auto t : local) {
                            auto m = price(t, state);
                            lat += m.latency;
                            energy += m.energy;
                            if (t == pos) opt.metrics = m;
                        }
                    } catch (const Error& e) {
                        if (e.code() != ErrorCode::UnsupportedFormat) throw;
                        supported = false;
                    }
                    for (auto tp : graph_.index.task_inputs[pos]) state.tensor_formats[tp] = saved_formats[tp];
                    for (auto tp : graph_.index.task_outputs[pos]) state.tensor_formats[tp] = saved_formats[tp];
                    state.kernels[pos] = saved_kernel;
                    if (!supported) continue;

                    opt.latency_savings = cur_latency - lat;
                    opt.delta_latency_pct = percent_delta_or_zero(cur_latency, lat);
                    opt.delta_power_pct = percent_delta_or_zero(cur_power, lat > 0 ? energy / lat : 0.0);
                    opt.delta_weight_bytes_pct =
                        percent_delta_or_zero(cur_weight_bytes, static_cast<double>(opt.metrics.weight_bytes));
                    out.push_back(opt);
                }
            }
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const OptimizationOption& a, const OptimizationOption& b) {
        return a.latency_savings > b.latency_savings;
    });
    return out;
}

SimulationResult simulate(const ModelGraph& g, const OptimizationSelection& selection, const HardwareProfile& p) {
    return Simulator(g, p).simulate(selection);
}

std::vector<OptimizationOption> enumerate_options(const ModelGraph& g, TaskId task,
                                                  const OptimizationSelection& current, const HardwareProfile& p) {
    return Simulator(g, p).enumerate_options(task, current);
}

namespace {

// Incremental planner state. A plan gives some tasks a full config; configs
// apply in task-id order, so a tensor takes the format set by the
// highest-id chosen task touching it.
class Planner {
public:
    Planner(const Simulator& sim, const OptionFilter& allowed)
        : sim_(sim), g_(sim.graph()), chosen_(g_.tasks.size()), candidates_(g_.tasks.size()) {
        state_ = sim_.apply({});
        base_formats_ = state_.tensor_formats;
        base_kernels_ = state_.kernels;
        for (std::size_t t = 0; t < g_.tasks.size(); ++t) {
            for (const auto& o : sim_.enumerate_options(g_.tasks[t].id, {})) {
                if (!allowed || allowed(g_.tasks[t], o.cfg)) candidates_[t].push_back(o.cfg);
            }
            near_.push_back(neighborhood(g_, t));
        }
        metrics_.resize(g_.tasks.size());
        for (std::size_t t = 0; t < g_.tasks.size(); ++t) metrics_[t] = sim_.price(t, state_);
        additive_ = sim_.profile().engines <= 1;
        total_ = recompute_total();
    }

    [[nodiscard]] double total() const { return total_; }
    [[nodiscard]] const std::vector<TaskConfig>& candidates(std::size_t t) const { return candidates_[t]; }
    [[nodiscard]] const std::optional<TaskConfig>& chosen(std::size_t t) const { return chosen_[t]; }

    // Whole-model latency if task t's choice were `choice`; nullopt when a
    // touched task would be priced in an unsupported format.
    std::optional<double> evaluate(std::size_t t, const std::optional<TaskConfig>& choice) {
        if (!additive_) {
            auto saved = chosen_[t];
            chosen_[t] = choice;
            std::optional<double> out;
            try {
                out = sim_.total_latency(selection());
            } catch (const Error& e) {
                if (e.code() != ErrorCode::UnsupportedFormat) throw;
            }
            chosen_[t] = saved;
            return out;
        }
        const auto saved = swap_in(t, choice);
        std::optional<double> out;
        try {
            double delta = 0;
            for (auto u : near_[t]) delta += sim_.price(u, state_).latency - metrics_[u].latency;
            out = total_ + delta;
        } catch (const Error& e) {
            if (e.code() != ErrorCode::UnsupportedFormat) throw;
        }
        restore(t, saved);
        return out;
    }

    void commit(std::size_t t, const std::optional<TaskConfig>& choice) {
        swap_in(t, choice);
        for (auto u : near_[t]) metrics_[u] = sim_.price(u, state_);
        total_ = recompute_total();
    }

    void reset(const std::vector<std::optional<TaskConfig>>& plan) {
        chosen_ = plan;
        state_.tensor_formats = base_formats_;
        state_.kernels = base_kernels_;
        for (std::size_t t = 0; t < g_.tasks.size(); ++t) {
            if (!chosen_[t]) continue;
            for (auto tp : g_.index.task_inputs[t]) state_.tensor_formats[tp] = chosen_[t]->input_format;
            for (auto tp : g_.index.task_outputs[t]) state_.tensor_formats[tp] = chosen_[t]->output_format;
            state_.kernels[t] = kernel_of(t, *chosen_[t]);
        }
        for (std::size_t t = 0; t < g_.tasks.size(); ++t) metrics_[t] = sim_.price(t, state_);
        total_ = recompute_total();
    }

    [[nodiscard]] const std::vector<std::optional<TaskConfig>>& plan() const { return chosen_; }

    [[nodiscard]] OptimizationSelection selection() const {
        OptimizationSelection s;
        for (std::size_t t = 0; t < chosen_.size(); ++t) {
            if (chosen_[t]) s.targeted.push_back(TaskOverride::full(g_.tasks[t].id, *chosen_[t]));
        }
        return s;
    }

private:
    struct Saved {
        std::optional<TaskConfig> choice;
        std::vector<std::pair<std::size_t, NumericFormat>> formats;
        KernelConfig kernel;
    };

    KernelConfig kernel_of(std::size_t t, const TaskConfig& c) const {
        return g_.tasks[t].has_weights() ? KernelConfig{c.kernel_format, c.sparsity, c.palette_bits} : base_kernels_[t];
    }

    // Format of tensor tp under the current choices.
    NumericFormat resolve(std::size_t tp) const {
        std::optional<std::size_t> writer;
        const auto consider = [&](std::size_t u) {
            if (chosen_[u] && (!writer || u > *writer)) writer = u;
        };
        if (g_.index.producer[tp] != kNoProducer) consider(g_.index.producer[tp]);
        for (auto u : g_.index.consumers[tp]) consider(u);
        if (!writer) return base_formats_[tp];
        return g_.index.producer[tp] == *writer ? chosen_[*writer]->output_format : chosen_[*writer]->input_format;
    }

    Saved swap_in(std::size_t t, const std::optional<TaskConfig>& choice) {
        Saved saved{chosen_[t], {}, state_.kernels[t]};
        chosen_[t] = choice;
        for (const auto* list : {&g_.index.task_inputs[t], &g_.index.task_outputs[t]}) {
            for (auto tp : *list) {
                saved.formats.emplace_back(tp, state_.tensor_formats[tp]);
                state_.tensor_formats[tp] = resolve(tp);
            }
        }
        state_.kernels[t] = choice ? kernel_of(t, *choice) : base_kernels_[t];
        return saved;
    }

    void restore(std::size_t t, const Saved& saved) {
        chosen_[t] = saved.choice;
        for (auto it = saved.formats.rbegin(); it != saved.formats.rend(); ++it) state_.tensor_formats[it->first] = it->second;
        state_.kernels[t] = saved.kernel;
    }

    double recompute_total() const {
        if (additive_) {
            double sum = 0;
            for (const auto& m : metrics_) sum += m.latency;
            return sum;
        }
        return summarize(g_, metrics_, sim_.profile().engines).total_latency;
    }

    const Simulator& sim_;
    const ModelGraph& g_;
    std::vector<std::optional<TaskConfig>> chosen_;
    std::vector<std::vector<TaskConfig>> candidates_;
    std::vector<std::vector<std::size_t>> near_;
    Simulator::State state_;
    std::vector<NumericFormat> base_formats_;
    std::vector<KernelConfig> base_kernels_;
    std::vector<TaskMetrics> metrics_;
    bool additive_ = true;
    double total_ = 0;
};

// Relative slack so a plan priced incrementally is not rejected over rounding.
constexpr double kPlanEps = 1e-12;

bool within(double latency, double budget) { return latency <= budget * (1 + kPlanEps); }

}  // namespace

PlanResult plan_to_budget(const ModelGraph& g, const HardwareProfile& p, double latency_budget,
                          const OptionFilter& allowed) {
    if (!(latency_budget > 0)) throw Error(ErrorCode::Usage, "latency budget must be positive");
    const Simulator sim(g, p);
    PlanResult result;
    result.latency = sim.baseline_summary().total_latency;
    if (result.latency <= latency_budget) {
        result.status = PlanStatus::met;
        return result;
    }
    const std::size_t n = g.tasks.size();
    Planner planner(sim, allowed);

    auto best_plan = planner.plan();
    double best_latency = planner.total();
    auto finish = [&](PlanStatus status) {
        planner.reset(best_plan);
        result.selection = planner.selection();
        result.latency = sim.total_latency(result.selection);
        result.status = status == PlanStatus::met && result.latency <= latency_budget ? PlanStatus::met
                                                                                     : PlanStatus::infeasible;
        return result;
    };
    auto note = [&] {
        if (planner.total() < best_latency) {
            best_latency = planner.total();
            best_plan = planner.plan();
        }
        return within(planner.total(), latency_budget);
    };

    // Greedy: optimize the task whose best option gives the lowest whole-model
    // latency (ties: lower id) until the budget is met or every task is taken.
    for (std::size_t step = 0; step < n; ++step) {
        std::optional<std::size_t> pick;
        TaskConfig pick_cfg;
        double pick_latency = INFINITY;
        for (std::size_t t = 0; t < n; ++t) {
            if (planner.chosen(t)) continue;
            for (const auto& c : planner.candidates(t)) {
                auto lat = planner.evaluate(t, c);
                if (lat && *lat < pick_latency) {
                    pick_latency = *lat;
                    pick = t;
                    pick_cfg = c;
                }
            }
        }
        if (!pick) break;
        planner.commit(*pick, pick_cfg);
        if (note()) return finish(PlanStatus::met);
    }

    // Model-wide plans: one config shape applied to every task that allows it.
    std::vector<TaskConfig> shapes;
    for (std::size_t t = 0; t < n; ++t) {
        for (const auto& c : planner.candidates(t)) {
            if (std::find(shapes.begin(), shapes.end(), c) == shapes.end()) shapes.push_back(c);
        }
    }
    std::vector<std::vector<std::optional<TaskConfig>>> seeds = {best_plan};
    for (const auto& shape : shapes) {
        std::vector<std::optional<TaskConfig>> plan(n);
        for (std::size_t t = 0; t < n; ++t) {
            for (const auto& c : planner.candidates(t)) {
                const bool same_io = c.input_format == shape.input_format && c.output_format == shape.output_format;
                const bool same_kernel = !g.tasks[t].has_weights() ||
                                         (c.kernel_format == shape.kernel_format && c.sparsity == shape.sparsity &&
                                          c.palette_bits == shape.palette_bits);
                if (same_io && same_kernel) {
                    plan[t] = c;
                    break;
                }
            }
        }
        planner.reset(plan);
        if (note()) return finish(PlanStatus::met);
        seeds.push_back(plan);
    }

    // Local search from every seed: change one task's choice (including
    // dropping it) while that lowers the total.
    for (const auto& seed : seeds) {
        planner.reset(seed);
        bool improved = true;
        while (improved) {
            improved = false;
            for (std::size_t t = 0; t < n; ++t) {
                std::optional<std::optional<TaskConfig>> move;
                double move_latency = planner.total() * (1 - kPlanEps);
                auto consider = [&](const std::optional<TaskConfig>& choice) {
                    if (choice == planner.chosen(t)) return;
                    auto lat = planner.evaluate(t, choice);
                    if (lat && *lat < move_latency) {
                        move_latency = *lat;
                        move = choice;
                    }
                };
                consider(std::nullopt);
                for (const auto& c : planner.candidates(t)) consider(c);
                if (move) {
                    planner.commit(t, *move);
                    improved = true;
                    if (note()) return finish(PlanStatus::met);
                }
            }
        }
    }
    return finish(PlanStatus::infeasible);
}

json option_to_json(const OptimizationOption& o) {
    return json{{"config", config_to_json(o.cfg)},
                {"metrics", metrics_to_json(o.metrics)},
                {"latency_savings", o.latency_savings},
                {"delta_latency_pct", round_percent(o.delta_latency_pct)},
                {"delta_power_pct", round_percent(o.delta_power_pct)},
                {"delta_weight_bytes_pct", round_percent(o.delta_weight_bytes_pct)}};
}

namespace {

json effective_to_json(const EffectiveConfig& c) {
    auto names = [](const std::vector<NumericFormat>& v) {
        json a = json::array();
        for (auto f : v) a.push_back(to_string(f));
        return a;
    };
    return json{{"inputs", names(c.inputs)},
                {"outputs", names(c.outputs)},
                {"kernel", to_string(c.kernel.kernel_format)},
                {"sparsity", c.kernel.sparsity},
                {"palette_bits", c.kernel.palette_bits}};
}

}  // namespace

json simulation_to_json(const ModelGraph& g, const SimulationResult& r) {
    json tasks = json::array();
    for (std::size_t t = 0; t < r.per_task.size(); ++t) {
        const auto& tr = r.per_task[t];
        tasks.push_back(json{{"task", g.tasks[t].id},
                             {"baseline", metrics_to_json(tr.baseline)},
                             {"optimized", metrics_to_json(tr.optimized)},
                             {"baseline_config", effective_to_json(tr.baseline_config)},
                             {"config", effective_to_json(tr.effective)},
                             {"changed", tr.changed},
                             {"delta_latency_pct",
                              round_percent(percent_delta_or_zero(tr.baseline.latency, tr.optimized.latency))}});
    }
    json conflicts = json::array();
    for (const auto& c : r.conflicts) {
        conflicts.push_back(json{{"tensor", c.tensor},
                                 {"earlier_task", c.earlier_task},
                                 {"later_task", c.later_task},
                                 {"earlier", to_string(c.earlier)},
                                 {"later", to_string(c.later)}});
    }
    return json{{"summary_base", summary_to_json(r.summary_base)},
                {"summary_opt", summary_to_json(r.summary_opt)},
                {"delta_power_pct", round_percent(r.delta_power_pct)},
                {"delta_latency_pct", round_percent(r.delta_latency_pct)},
                {"affected_task_ids", r.affected_task_ids},
                {"conflicts", std::move(conflicts)},
                {"per_task", std::move(tasks)}};
}

}  // namespace tasklens
