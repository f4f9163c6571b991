#include "tasklens/report.hpp"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>

#include "tasklens/error.hpp"

namespace tasklens::report {

using nlohmann::json;

namespace {

enum class Source { identity, metric, config };

struct ColumnSpec {
    Column column;
    Source source;
    int precision;  // table display decimals; -1 = integer
};

const std::vector<ColumnSpec>& specs() {
    static const std::vector<ColumnSpec> kSpecs = {
        {{"task", "Task", "", "Hardware task id, dense from 0 in execution order.", true}, Source::identity, -1},
        {{"name", "Name", "", "Task name as emitted by the compiler, usually the source layer.", false},
         Source::identity, 0},
        {{"kind", "Kind", "", "Operation type executed by the accelerator.", false}, Source::identity, 0},
        {{"group", "Group", "", "Slash-separated grouping path defined in the model code.", false},
         Source::identity, 0},
        {{"total_time", "Static Total Time", "ms",
          "Estimated time the task occupies the accelerator: the larger of compute and memory time, plus any "
          "format conversion.",
          true},
         Source::metric, 4},
        {{"compute_time", "Compute Time", "ms", "Time spent on arithmetic at the task's compute format.", true},
         Source::metric, 4},
        {{"memory_time", "Memory Time", "ms", "Time spent moving inputs, outputs and weights over the memory bus.",
          true},
         Source::metric, 4},
        {{"conversion_overhead", "Conversion", "ms",
          "Extra time for converting integer data to high precision on sensitive operations.", true},
         Source::metric, 4},
        {{"bytes_moved", "Bytes Moved", "B", "Bytes read and written, including weights.", true}, Source::metric, -1},
        {{"weight_bytes", "Weight Size", "B", "Stored size of the task's weights after compression.", true},
         Source::metric, -1},
        {{"energy", "Energy", "uJ", "Energy spent on data movement.", true}, Source::metric, 3},
        {{"memory_power", "Memory Power", "mW", "Average power of data movement: energy divided by time.", true},
         Source::metric, 2},
        {{"macs", "Work", "ops", "Multiply-accumulates (or element operations) after sparsity savings.", true},
         Source::metric, 0},
        {{"input_format", "Input Format", "", "Numeric format of the task's first input tensor.", false},
         Source::config, 0},
        {{"output_format", "Output Format", "", "Numeric format of the task's first output tensor.", false},
         Source::config, 0},
        {{"kernel_format", "Kernel Format", "", "Numeric format of stored weights.", false}, Source::config, 0},
        {{"sparsity", "Weight Sparsity", "", "Fraction of weights pruned.", true}, Source::config, 2},
        {{"palette_bits", "Palette Bits", "bits", "Index width for palettized weights, 0 when not palettized.", true},
         Source::config, -1},
    };
    return kSpecs;
}

const ColumnSpec* find_spec(std::string_view id) {
    for (const auto& s : specs()) {
        if (s.column.id == id) return &s;
    }
    return nullptr;
}

json metric_values(const TaskMetrics& m, const TaskConfig& c) {
    return json{{"total_time", m.latency},
                {"compute_time", m.compute_time},
                {"memory_time", m.memory_time},
                {"conversion_overhead", m.conversion_overhead},
                {"bytes_moved", m.bytes_moved},
                {"weight_bytes", m.weight_bytes},
                {"energy", m.energy},
                {"memory_power", m.memory_power},
                {"macs", m.macs_effective},
                {"input_format", to_string(c.input_format)},
                {"output_format", to_string(c.output_format)},
                {"kernel_format", to_string(c.kernel_format)},
                {"sparsity", c.sparsity},
                {"palette_bits", c.palette_bits}};
}

json delta_values(const TaskMetrics& base, const TaskMetrics& opt) {
    auto pct = [](double b, double n) { return round_percent(percent_delta_or_zero(b, n)); };
    return json{{"total_time", pct(base.latency, opt.latency)},
                {"compute_time", pct(base.compute_time, opt.compute_time)},
                {"memory_time", pct(base.memory_time, opt.memory_time)},
                {"conversion_overhead", pct(base.conversion_overhead, opt.conversion_overhead)},
                {"bytes_moved", pct(static_cast<double>(base.bytes_moved), static_cast<double>(opt.bytes_moved))},
                {"weight_bytes", pct(static_cast<double>(base.weight_bytes), static_cast<double>(opt.weight_bytes))},
                {"energy", pct(base.energy, opt.energy)},
                {"memory_power", pct(base.memory_power, opt.memory_power)},
                {"macs", pct(base.macs_effective, opt.macs_effective)}};
}

// Value shown for a column: optimized when a selection was applied.
const json& cell(const json& row, const ColumnSpec& spec) {
    static const json kNull;
    if (spec.source == Source::identity) return row.at(spec.column.id);
    const json& side = row.contains("optimized") ? row["optimized"] : row["base"];
    auto it = side.find(spec.column.id);
    return it == side.end() ? kNull : *it;
}

std::string display(const json& v, const ColumnSpec& spec) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_null()) return "";
    if (spec.precision < 0) return fmt::format("{}", v.get<std::int64_t>());
    return fmt::format("{:.{}f}", v.get<double>(), spec.precision);
}

std::string csv_field(const json& v) {
    if (v.is_null()) return "";
    if (!v.is_string()) return v.dump();
    auto s = v.get<std::string>();
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    return out + "\"";
}

const ColumnSpec& require_column(std::string_view id) {
    if (const auto* s = find_spec(id)) return *s;
    throw Error(ErrorCode::Usage, fmt::format("unknown column '{}'; valid columns: {}", id, column_ids()),
                json{{"column", std::string(id)}});
}

std::string fit(std::string s, std::size_t width) {
    if (s.size() <= width) return s;
    if (width == 0) return {};
    return s.substr(0, width - 1) + "~";
}

// Table layout: column id and its compact header.
const std::vector<std::pair<std::string, std::string>> kTableColumns = {
    {"task", "task"},          {"name", "name"},           {"kind", "kind"},
    {"total_time", "time_ms"}, {"compute_time", "cmp_ms"}, {"memory_time", "mem_ms"},
    {"bytes_moved", "bytes"},  {"weight_bytes", "weights"}, {"memory_power", "power_mw"},
    {"input_format", "in"},    {"output_format", "out"},   {"kernel_format", "kern"},
    {"sparsity", "sparse"}};

}  // namespace

const std::vector<Column>& columns() {
    static const std::vector<Column> kColumns = [] {
        std::vector<Column> out;
        for (const auto& s : specs()) out.push_back(s.column);
        return out;
    }();
    return kColumns;
}

const Column* find_column(std::string_view id) {
    const auto* s = find_spec(id);
    return s ? &s->column : nullptr;
}

std::string column_ids() {
    std::string out;
    for (const auto& s : specs()) {
        if (!out.empty()) out += ", ";
        out += s.column.id;
    }
    return out;
}

json summary_payload(const ModelGraph& g, const SimulationResult& sim) {
    json out{{"base", summary_to_json(sim.summary_base)},
             {"optimized", summary_to_json(sim.summary_opt)},
             {"delta_power_pct", round_percent(sim.delta_power_pct)},
             {"delta_latency_pct", round_percent(sim.delta_latency_pct)}};
    out["fps_target"] = g.fps_target ? json(*g.fps_target) : json(nullptr);
    return out;
}

json metrics_payload(const ModelGraph& g, const SimulationResult& sim, bool with_selection,
                     const MetricsQuery& query) {
    json cols = json::array();
    for (const auto& c : columns()) {
        cols.push_back(json{{"id", c.id},
                            {"label", c.label},
                            {"unit", c.unit},
                            {"description", c.description},
                            {"numeric", c.numeric}});
    }
    json rows = json::array();
    const std::size_t n = g.tasks.size();
    const std::size_t begin = std::min(query.offset, n);
    const std::size_t end = std::min(n, begin + query.limit);
    for (std::size_t t = begin; t < end; ++t) {
        const auto& task = g.tasks[t];
        const auto& tr = sim.per_task[t];
        json row{{"task", task.id}, {"name", task.name}, {"kind", to_string(task.kind)}, {"group", task.group}};
        row["base"] = metric_values(tr.baseline, tr.baseline_config.summary(NumericFormat::fp16));
        if (with_selection) {
            row["optimized"] = metric_values(tr.optimized, tr.effective.summary(NumericFormat::fp16));
            row["delta"] = delta_values(tr.baseline, tr.optimized);
            row["changed"] = tr.changed;
        }
        rows.push_back(std::move(row));
    }
    return json{{"columns", std::move(cols)},
                {"rows", std::move(rows)},
                {"total_rows", n},
                {"offset", begin},
                {"summary", summary_payload(g, sim)}};
}

json select_rows(const json& payload, const TableOptions& opts) {
    json out = payload;
    json& rows = out["rows"];
    if (opts.sort) {
        const auto& spec = require_column(*opts.sort);
        std::vector<json> sorted(rows.begin(), rows.end());
        std::stable_sort(sorted.begin(), sorted.end(), [&](const json& a, const json& b) {
            const json& va = cell(a, spec);
            const json& vb = cell(b, spec);
            if (va.is_number() && vb.is_number()) return va.get<double>() > vb.get<double>();
            return va.dump() < vb.dump();
        });
        rows = json(sorted);
    }
    if (opts.top && rows.size() > *opts.top) {
        rows.erase(rows.begin() + static_cast<std::ptrdiff_t>(*opts.top), rows.end());
    }
    return out;
}

std::string render_table(const json& payload, const TableOptions& opts) {
    const json selected = select_rows(payload, opts);
    const bool with_delta = !selected["rows"].empty() && selected["rows"][0].contains("delta");

    std::vector<const ColumnSpec*> cols;
    std::vector<std::string> headers;
    for (const auto& [id, header] : kTableColumns) {
        cols.push_back(find_spec(id));
        headers.push_back(header);
    }
    if (with_delta) headers.emplace_back("d_time_%");

    std::vector<std::vector<std::string>> cells;
    for (const auto& row : selected["rows"]) {
        std::vector<std::string> line;
        for (const auto* c : cols) line.push_back(display(cell(row, *c), *c));
        if (with_delta) line.push_back(fmt::format("{:.2f}", row["delta"]["total_time"].get<double>()));
        cells.push_back(std::move(line));
    }

    std::vector<std::size_t> widths(headers.size());
    for (std::size_t i = 0; i < headers.size(); ++i) {
        widths[i] = headers[i].size();
        for (const auto& line : cells) widths[i] = std::max(widths[i], line[i].size());
    }
    // Names are the only free-form column; shrink them first to honour the width cap.
    constexpr std::size_t kNameCol = 1;
    auto total = [&] { return std::accumulate(widths.begin(), widths.end(), std::size_t{0}) + 2 * (widths.size() - 1); };
    if (total() > opts.max_width) {
        const auto excess = total() - opts.max_width;
        widths[kNameCol] = std::max<std::size_t>(8, widths[kNameCol] > excess ? widths[kNameCol] - excess : 8);
    }

    auto emit = [&](const std::vector<std::string>& line) {
        std::string out;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (i) out += "  ";
            const auto text = fit(line[i], widths[i]);
            const bool left = i < cols.size() && !cols[i]->column.numeric;
            out += left ? fmt::format("{:<{}}", text, widths[i]) : fmt::format("{:>{}}", text, widths[i]);
        }
        while (!out.empty() && out.back() == ' ') out.pop_back();
        return fit(out, opts.max_width) + "\n";
    };

    std::string out = emit(headers);
    std::string rule;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        if (i) rule += "  ";
        rule += std::string(widths[i], '-');
    }
    out += fit(rule, opts.max_width) + "\n";
    for (const auto& line : cells) out += emit(line);

    const auto& s = payload["summary"];
    const auto& base = s["base"];
    auto fps = [](const json& v) { return v.is_null() ? std::string("-") : fmt::format("{:.2f}", v.get<double>()); };
    out += fit(rule, opts.max_width) + "\n";
    out += fmt::format("{} of {} tasks  latency {:.4f} ms  memory power {:.2f} mW  energy {:.3f} uJ  weights {} B  fps {}\n",
                       selected["rows"].size(), payload["total_rows"].get<std::size_t>(),
                       base["total_latency"].get<double>(), base["memory_power"].get<double>(),
                       base["total_energy"].get<double>(), base["total_weight_bytes"].get<std::uint64_t>(),
                       fps(base["achieved_fps"]));
    if (with_delta) {
        const auto& opt = s["optimized"];
        out += fmt::format("optimized  latency {:.4f} ms ({:.2f}%)  memory power {:.2f} mW ({:.2f}%)  fps {}\n",
                           opt["total_latency"].get<double>(), s["delta_latency_pct"].get<double>(),
                           opt["memory_power"].get<double>(), s["delta_power_pct"].get<double>(),
                           fps(opt["achieved_fps"]));
    }
    return out;
}

std::string render_csv(const json& payload, const TableOptions& opts) {
    const json selected = select_rows(payload, opts);
    const bool with_selection = !selected["rows"].empty() && selected["rows"][0].contains("optimized");

    std::vector<std::string> header;
    for (const auto& s : specs()) header.push_back(s.column.id);
    if (with_selection) {
        for (const auto& s : specs()) {
            if (s.source != Source::identity) header.push_back("opt_" + s.column.id);
        }
        for (const auto& s : specs()) {
            if (s.source == Source::metric) header.push_back("delta_" + s.column.id);
        }
    }
    std::string out;
    for (std::size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + header[i];
    out += "\n";
    for (const auto& row : selected["rows"]) {
        std::vector<std::string> fields;
        for (const auto& s : specs()) {
            fields.push_back(csv_field(s.source == Source::identity ? row[s.column.id] : row["base"][s.column.id]));
        }
        if (with_selection) {
            for (const auto& s : specs()) {
                if (s.source != Source::identity) fields.push_back(csv_field(row["optimized"][s.column.id]));
            }
            for (const auto& s : specs()) {
                if (s.source == Source::metric) fields.push_back(csv_field(row["delta"][s.column.id]));
            }
        }
        for (std::size_t i = 0; i < fields.size(); ++i) out += (i ? "," : "") + fields[i];
        out += "\n";
    }
    return out;
}

}  // namespace tasklens::report
