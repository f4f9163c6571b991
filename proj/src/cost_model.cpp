#include "tasklens/cost_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "tasklens/error.hpp"
#include "tasklens/scheduler.hpp"

namespace tasklens {

using nlohmann::json;

namespace {

// Generated from profiles/generic-npu-v1.json at configure time.
constexpr const char* kDefaultProfileJson =
#include "default_profile.inc"
    ;

[[noreturn]] void profile_fail(const std::string& ptr, const std::string& what) {
    throw Error(ErrorCode::SchemaError, fmt::format("profile: {} at {}", what, ptr), json{{"pointer", ptr}});
}

std::size_t kind_slot(TaskKind k) { return static_cast<std::size_t>(k); }
std::size_t format_slot(NumericFormat f) { return static_cast<std::size_t>(f); }

// ceil() that ignores binary noise just above an integer.
std::uint64_t ceil_bytes(double bytes) {
    const double nearest = std::round(bytes);
    if (std::abs(bytes - nearest) <= 1e-9 * std::max(1.0, nearest)) return static_cast<std::uint64_t>(nearest);
    return static_cast<std::uint64_t>(std::ceil(bytes));
}

}  // namespace

std::optional<double> HardwareProfile::throughput_for(TaskKind k, NumericFormat f) const {
    return throughput[kind_slot(k)][format_slot(f)];
}

bool HardwareProfile::is_high_precision(TaskKind k) const {
    return std::find(high_precision_kinds.begin(), high_precision_kinds.end(), k) != high_precision_kinds.end();
}

HardwareProfile profile_from_json(const json& doc) {
    if (!doc.is_object()) profile_fail("/", "expected object");
    HardwareProfile p;
    auto number = [&](const char* key) {
        auto it = doc.find(key);
        if (it == doc.end() || !it->is_number()) profile_fail(std::string("/") + key, "expected number");
        return it->get<double>();
    };
    auto formats = [&](const char* key) {
        auto it = doc.find(key);
        if (it == doc.end() || !it->is_array()) profile_fail(std::string("/") + key, "expected array");
        std::vector<NumericFormat> out;
        for (std::size_t i = 0; i < it->size(); ++i) {
            auto f = (*it)[i].is_string() ? parse_format((*it)[i].get<std::string>()) : std::nullopt;
            if (!f) profile_fail(fmt::format("/{}/{}", key, i), "unknown format");
            if (std::find(out.begin(), out.end(), *f) != out.end()) profile_fail(fmt::format("/{}/{}", key, i), "duplicate format");
            out.push_back(*f);
        }
        return out;
    };

    if (!doc.contains("name") || !doc["name"].is_string()) profile_fail("/name", "expected string");
    p.name = doc["name"].get<std::string>();
    p.bandwidth = number("bandwidth");
    p.convert_throughput = number("convert_throughput");
    p.energy_per_byte = number("energy_per_byte");
    p.sparse_compute_efficiency = number("sparse_compute_efficiency");
    if (!(p.bandwidth > 0)) profile_fail("/bandwidth", "must be positive");
    if (!(p.convert_throughput > 0)) profile_fail("/convert_throughput", "must be positive");
    if (!(p.energy_per_byte > 0)) profile_fail("/energy_per_byte", "must be positive");
    if (!(p.sparse_compute_efficiency >= 0 && p.sparse_compute_efficiency <= 1)) {
        profile_fail("/sparse_compute_efficiency", "must lie in [0,1]");
    }
    if (auto it = doc.find("engines"); it != doc.end()) {
        if (!it->is_number_integer() || it->get<int>() < 1) profile_fail("/engines", "expected positive integer");
        p.engines = it->get<int>();
    }
    p.io_formats = formats("io_formats");
    p.kernel_formats = formats("kernel_formats");

    auto levels = doc.find("sparsity_levels");
    if (levels == doc.end() || !levels->is_array() || levels->empty()) profile_fail("/sparsity_levels", "expected non-empty array");
    for (std::size_t i = 0; i < levels->size(); ++i) {
        const auto& v = (*levels)[i];
        if (!v.is_number() || v.get<double>() < 0 || v.get<double>() >= 1) {
            profile_fail(fmt::format("/sparsity_levels/{}", i), "expected number in [0,1)");
        }
        p.sparsity_levels.push_back(v.get<double>());
    }

    auto hp = doc.find("high_precision_kinds");
    if (hp != doc.end()) {
        if (!hp->is_array()) profile_fail("/high_precision_kinds", "expected array");
        for (std::size_t i = 0; i < hp->size(); ++i) {
            auto k = (*hp)[i].is_string() ? parse_kind((*hp)[i].get<std::string>()) : std::nullopt;
            if (!k) profile_fail(fmt::format("/high_precision_kinds/{}", i), "unknown kind");
            p.high_precision_kinds.push_back(*k);
        }
    }

    auto tp = doc.find("throughput");
    if (tp == doc.end() || !tp->is_object()) profile_fail("/throughput", "expected object");
    std::array<std::array<bool, kAllFormats.size()>, kAllKinds.size()> declared{};
    for (const auto& [kind_name, per_format] : tp->items()) {
        auto kind = parse_kind(kind_name);
        if (!kind) profile_fail("/throughput/" + kind_name, "unknown kind");
        if (!per_format.is_object()) profile_fail("/throughput/" + kind_name, "expected object");
        for (const auto& [fmt_name, value] : per_format.items()) {
            auto f = parse_format(fmt_name);
            const auto ptr = fmt::format("/throughput/{}/{}", kind_name, fmt_name);
            if (!f) profile_fail(ptr, "unknown format");
            declared[kind_slot(*kind)][format_slot(*f)] = true;
            if (value.is_string() && value.get<std::string>() == "unsupported") continue;
            if (!value.is_number() || !(value.get<double>() > 0)) profile_fail(ptr, "expected positive number or \"unsupported\"");
            p.throughput[kind_slot(*kind)][format_slot(*f)] = value.get<double>();
        }
    }
    std::set<NumericFormat> covered(p.io_formats.begin(), p.io_formats.end());
    covered.insert(p.kernel_formats.begin(), p.kernel_formats.end());
    covered.insert(NumericFormat::fp16);  // palettized compute
    for (auto k : kAllKinds) {
        for (auto f : covered) {
            if (!declared[kind_slot(k)][format_slot(f)]) {
                profile_fail(fmt::format("/throughput/{}/{}", to_string(k), to_string(f)),
                             "missing entry (give a number or \"unsupported\")");
            }
        }
    }
    return p;
}

json profile_to_json(const HardwareProfile& p) {
    auto names = [](const auto& v) {
        json a = json::array();
        for (auto x : v) a.push_back(to_string(x));
        return a;
    };
    json tp = json::object();
    for (auto k : kAllKinds) {
        json row = json::object();
        for (auto f : kAllFormats) {
            auto v = p.throughput_for(k, f);
            if (v) row[std::string(to_string(f))] = *v;
            else row[std::string(to_string(f))] = "unsupported";
        }
        tp[std::string(to_string(k))] = std::move(row);
    }
    return json{{"name", p.name},
                {"bandwidth", p.bandwidth},
                {"convert_throughput", p.convert_throughput},
                {"energy_per_byte", p.energy_per_byte},
                {"engines", p.engines},
                {"sparse_compute_efficiency", p.sparse_compute_efficiency},
                {"high_precision_kinds", names(p.high_precision_kinds)},
                {"io_formats", names(p.io_formats)},
                {"kernel_formats", names(p.kernel_formats)},
                {"sparsity_levels", p.sparsity_levels},
                {"throughput", std::move(tp)}};
}

HardwareProfile load_profile(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, fmt::format("cannot read profile {}", path.string()));
    try {
        return profile_from_json(json::parse(in));
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::SchemaError, fmt::format("profile {}: {}", path.string(), e.what()));
    }
}

const HardwareProfile& default_profile() {
    static const HardwareProfile p = profile_from_json(json::parse(kDefaultProfileJson));
    return p;
}

std::uint64_t weight_bytes(std::int64_t weight_count, const TaskConfig& cfg) {
    if (weight_count <= 0) return 0;
    const auto w = static_cast<std::uint64_t>(weight_count);
    if (cfg.palette_bits > 0) {
        return packed_bytes(w, cfg.palette_bits) + (std::uint64_t{1} << cfg.palette_bits) * 2;
    }
    const int kbits = bits(cfg.kernel_format);
    if (cfg.sparsity == 0.0) return packed_bytes(w, kbits);
    const double kept = static_cast<double>(w) * (1.0 - cfg.sparsity) * kbits / 8.0;
    return ceil_bytes(kept) + (w + 7) / 8;
}

TaskMetrics price_task(const HardwareTask& task, const ModelGraph& g,
                       std::span<const NumericFormat> input_formats,
                       std::span<const NumericFormat> output_formats,
                       const KernelConfig& kernel, const HardwareProfile& p) {
    const auto pos = static_cast<std::size_t>(task.id);
    const auto& ins = g.index.task_inputs[pos];
    const auto& outs = g.index.task_outputs[pos];

    TaskMetrics m;
    std::int64_t io_elems = 0;
    bool integer_io = false;
    for (std::size_t i = 0; i < ins.size(); ++i) {
        const auto elems = static_cast<std::uint64_t>(g.tensors[ins[i]].elem_count);
        m.bytes_moved += packed_bytes(elems, bits(input_formats[i]));
        io_elems += g.tensors[ins[i]].elem_count;
        integer_io = integer_io || is_integer(input_formats[i]);
    }
    for (std::size_t i = 0; i < outs.size(); ++i) {
        const auto elems = static_cast<std::uint64_t>(g.tensors[outs[i]].elem_count);
        m.bytes_moved += packed_bytes(elems, bits(output_formats[i]));
        io_elems += g.tensors[outs[i]].elem_count;
        integer_io = integer_io || is_integer(output_formats[i]);
    }

    const bool weighted = task.has_weights();
    double sparsity = 0.0;
    NumericFormat compute_format = NumericFormat::fp16;
    if (weighted) {
        const TaskConfig wcfg{NumericFormat::fp16, NumericFormat::fp16, kernel.kernel_format, kernel.sparsity,
                              kernel.palette_bits};
        m.weight_bytes = weight_bytes(task.weight_count, wcfg);
        m.bytes_moved += m.weight_bytes;
        if (kernel.palette_bits > 0) {
            compute_format = NumericFormat::fp16;
        } else {
            compute_format = kernel.kernel_format;
            sparsity = kernel.sparsity;
        }
    } else if (!input_formats.empty()) {
        compute_format = input_formats.front();
    } else if (!output_formats.empty()) {
        compute_format = output_formats.front();
    }

    const auto throughput = p.throughput_for(task.kind, compute_format);
    if (!throughput) {
        throw Error(ErrorCode::UnsupportedFormat,
                    fmt::format("task {} ({}) cannot run in {} on {}", task.id, to_string(task.kind),
                                to_string(compute_format), p.name),
                    json{{"task", task.id}, {"kind", to_string(task.kind)}, {"format", to_string(compute_format)}});
    }

    m.macs_effective = static_cast<double>(task.work()) * (1.0 - sparsity * p.sparse_compute_efficiency);
    m.compute_time = m.macs_effective / *throughput;
    m.memory_time = static_cast<double>(m.bytes_moved) / p.bandwidth;
    if (p.is_high_precision(task.kind) && integer_io) {
        m.conversion_overhead = static_cast<double>(io_elems) / p.convert_throughput;
    }
    m.latency = std::max(m.compute_time, m.memory_time) + m.conversion_overhead;
    m.energy = static_cast<double>(m.bytes_moved) * p.energy_per_byte;
    m.memory_power = m.latency > 0 ? m.energy / m.latency : 0.0;
    return m;
}

TaskMetrics estimate_task(const HardwareTask& task, const ModelGraph& g, const TaskConfig& cfg,
                          const HardwareProfile& p) {
    const auto pos = static_cast<std::size_t>(task.id);
    std::vector<NumericFormat> in(g.index.task_inputs[pos].size(), cfg.input_format);
    std::vector<NumericFormat> out(g.index.task_outputs[pos].size(), cfg.output_format);
    return price_task(task, g, in, out, KernelConfig{cfg.kernel_format, cfg.sparsity, cfg.palette_bits}, p);
}

ModelSummary summarize(std::span<const TaskMetrics> per_task) {
    ModelSummary s;
    s.task_count = per_task.size();
    for (const auto& m : per_task) {
        s.total_latency += m.latency;
        s.total_energy += m.energy;
        s.total_bytes_moved += m.bytes_moved;
        s.total_weight_bytes += m.weight_bytes;
    }
    s.memory_power = s.total_latency > 0 ? s.total_energy / s.total_latency : 0.0;
    if (s.total_latency > 0) s.achieved_fps = 1000.0 / s.total_latency;
    return s;
}

ModelSummary summarize(const ModelGraph& g, std::span<const TaskMetrics> per_task, int engines) {
    ModelSummary s = summarize(per_task);
    if (engines <= 1) return s;
    s.total_latency = schedule(g, per_task, engines).makespan;
    s.memory_power = s.total_latency > 0 ? s.total_energy / s.total_latency : 0.0;
    s.achieved_fps = s.total_latency > 0 ? std::optional<double>(1000.0 / s.total_latency) : std::nullopt;
    return s;
}

double percent_delta(double base, double updated) {
    if (base == 0.0) {
        throw Error(ErrorCode::DivisionByZero, "percent change from a zero baseline is undefined");
    }
    return 100.0 * (base - updated) / base;
}

double percent_delta_or_zero(double base, double updated) {
    if (base == 0.0) return 0.0;
    return percent_delta(base, updated);
}

double round_percent(double pct) {
    // Strip binary noise below 1e-6 of a hundredth before rounding halves away from zero.
    const double hundredths = std::round(pct * 100.0 * 1e6) / 1e6;
    const double r = std::round(hundredths) / 100.0;
    return r == 0.0 ? 0.0 : r;
}

json metrics_to_json(const TaskMetrics& m) {
    return json{{"latency", m.latency},
                {"compute_time", m.compute_time},
                {"memory_time", m.memory_time},
                {"conversion_overhead", m.conversion_overhead},
                {"bytes_moved", m.bytes_moved},
                {"weight_bytes", m.weight_bytes},
                {"energy", m.energy},
                {"memory_power", m.memory_power},
                {"macs_effective", m.macs_effective}};
}

json summary_to_json(const ModelSummary& s) {
    json j{{"total_latency", s.total_latency},
           {"total_energy", s.total_energy},
           {"memory_power", s.memory_power},
           {"total_weight_bytes", s.total_weight_bytes},
           {"total_bytes_moved", s.total_bytes_moved},
           {"task_count", s.task_count}};
    j["achieved_fps"] = s.achieved_fps ? json(*s.achieved_fps) : json(nullptr);
    return j;
}

json config_to_json(const TaskConfig& c) {
    return json{{"input", to_string(c.input_format)},
                {"output", to_string(c.output_format)},
                {"kernel", to_string(c.kernel_format)},
                {"sparsity", c.sparsity},
                {"palette_bits", c.palette_bits}};
}

}  // namespace tasklens
