#include <doctest.h>

#include <cmath>
#include <map>

#include "gen.hpp"
#include "oracle.hpp"
#include "selection_oracle.hpp"
#include "tasklens/error.hpp"
#include "tasklens/fixtures.hpp"
#include "tasklens/optimizer.hpp"

using namespace tasklens;
using nlohmann::json;
using namespace selection_oracle;

namespace {

const HardwareProfile& P() { return default_profile(); }

bool close(double a, double b, double rel = 1e-12) {
    return std::abs(a - b) <= rel * std::max({1.0, std::abs(a), std::abs(b)});
}


void check_consistent(const ModelGraph& g, const SimulationResult& r, const std::map<std::string, std::string>& want) {
    // Every task's view of a tensor agrees with the replayed format.
    for (std::size_t t = 0; t < g.tasks.size(); ++t) {
        const auto& task = g.tasks[t];
        const auto& eff = r.per_task[t].effective;
        REQUIRE(eff.inputs.size() == task.inputs.size());
        REQUIRE(eff.outputs.size() == task.outputs.size());
        for (std::size_t i = 0; i < task.inputs.size(); ++i) CHECK(fname(eff.inputs[i]) == want.at(task.inputs[i]));
        for (std::size_t i = 0; i < task.outputs.size(); ++i) CHECK(fname(eff.outputs[i]) == want.at(task.outputs[i]));
    }
}

TaskOverride set_input(TaskId t, NumericFormat f) {
    TaskOverride o;
    o.task = t;
    o.input = f;
    return o;
}

TaskOverride set_output(TaskId t, NumericFormat f) {
    TaskOverride o;
    o.task = t;
    o.output = f;
    return o;
}

}  // namespace

TEST_CASE("presets") {
    for (auto p : kAllPresets) {
        CHECK(parse_preset(preset_id(p)) == p);
        CHECK_FALSE(preset_description(p).empty());
    }
    CHECK(preset_id(Preset::int8_io_kernel) == "int8-io-kernel");
    CHECK_FALSE(parse_preset("int3"));
    TaskConfig c{NumericFormat::fp16, NumericFormat::fp16, NumericFormat::fp16, 0.25, 0};
    CHECK(apply_preset(Preset::int8_io_kernel, c) == TaskConfig{NumericFormat::int8, NumericFormat::int8, NumericFormat::int8, 0.25, 0});
    CHECK(apply_preset(Preset::int8_kernel_only, c).input_format == NumericFormat::fp16);
    CHECK(apply_preset(Preset::prune_75, c).sparsity == 0.75);
    CHECK(apply_preset(Preset::palettize_4bit, c).palette_bits == 4);
    CHECK(apply_preset(Preset::fp16_baseline, apply_preset(Preset::palettize_4bit, c)) == TaskConfig{});
}

TEST_CASE("selection JSON") {
    OptimizationSelection s;
    s.preset = Preset::prune_50;
    s.targeted.push_back(TaskOverride::full(3, {NumericFormat::int8, NumericFormat::fp16, NumericFormat::int4, 0.5, 0}));
    s.targeted.push_back(set_input(1, NumericFormat::int8));
    auto doc = selection_to_json(s);
    CHECK(doc["preset"] == "prune-50");
    CHECK(doc["targeted"][1] == json{{"task", 1}, {"input", "int8"}});
    CHECK(selection_from_json(doc) == s);
    CHECK(selection_from_json(json::parse(doc.dump())) == s);
    CHECK(selection_digest(s) == selection_digest(selection_from_json(doc)));
    CHECK(selection_digest(s) != selection_digest({}));

    auto expect_pointer = [](const json& bad, const std::string& ptr) {
        try {
            (void)selection_from_json(bad);
            FAIL("expected SchemaError");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::SchemaError);
            CHECK(e.detail()["pointer"] == ptr);
        }
    };
    expect_pointer(json::parse(R"({"preset":"nope"})"), "/preset");
    expect_pointer(json::parse(R"({"targeted":[{"task":"1"}]})"), "/targeted/0/task");
    expect_pointer(json::parse(R"({"targeted":[{"task":1,"input":"int7"}]})"), "/targeted/0/input");
    expect_pointer(json::parse(R"({"targeted":[{"task":1},{"task":2,"sparsity":1.0}]})"), "/targeted/1/sparsity");
}

TEST_CASE("propagation: chain examples") {
    auto g = gen::chain3();
    SUBCASE("B input to int8 rewrites A's output") {
        OptimizationSelection s;
        s.targeted = {set_input(1, NumericFormat::int8)};
        auto r = propagate_formats(g, s);
        CHECK(r.tensor_formats.at("ab") == NumericFormat::int8);
        CHECK(r.tensor_formats.at("bc") == NumericFormat::fp16);
        CHECK(r.changed_tensors == std::vector<std::string>{"ab"});
        CHECK(r.affected == std::vector<TaskId>{0, 1});
        auto sim = simulate(g, s, P());
        CHECK(sim.per_task[0].effective.outputs[0] == NumericFormat::int8);
        CHECK(sim.per_task[1].effective.inputs[0] == NumericFormat::int8);
        CHECK(sim.per_task[1].effective.outputs[0] == NumericFormat::fp16);
    }
    SUBCASE("B output to int8 rewrites C's input") {
        OptimizationSelection s;
        s.targeted = {set_output(1, NumericFormat::int8)};
        auto r = propagate_formats(g, s);
        CHECK(r.tensor_formats.at("bc") == NumericFormat::int8);
        CHECK(r.affected == std::vector<TaskId>{1, 2});
    }
    SUBCASE("empty selection changes nothing") {
        auto r = propagate_formats(g, {});
        CHECK(r.changed_tensors.empty());
        CHECK(r.affected.empty());
        auto sim = simulate(g, {}, P());
        CHECK(sim.affected_task_ids.empty());
        CHECK(sim.summary_opt == sim.summary_base);
    }
}

TEST_CASE("propagation: fan-out matches brute force on the 4-node graph") {
    auto g = gen::fan_out();
    OptimizationSelection s;
    s.targeted = {set_input(1, NumericFormat::int8)};
    auto r = propagate_formats(g, s);
    CHECK(r.tensor_formats.at("a") == NumericFormat::int8);
    CHECK(r.affected == std::vector<TaskId>{0, 1, 2});
    auto sim = simulate(g, s, P());
    CHECK(sim.per_task[2].effective.inputs[0] == NumericFormat::int8);
    CHECK(sim.per_task[3].effective.inputs[0] == NumericFormat::fp16);

    // Brute force over every single-entry selection on the 4-node graph.
    for (TaskId t = 0; t < 4; ++t) {
        for (auto in : {std::optional<NumericFormat>{}, std::optional(NumericFormat::int8)}) {
            for (auto out : {std::optional<NumericFormat>{}, std::optional(NumericFormat::int8)}) {
                OptimizationSelection one;
                TaskOverride o;
                o.task = t;
                o.input = in;
                o.output = out;
                one.targeted = {o};
                auto want = replay(g, one);
                auto got = propagate_formats(g, one);
                for (const auto& [id, f] : want) CHECK(fname(got.tensor_formats.at(id)) == f);
                auto aff = touching_changed(g, want);
                CHECK(std::vector<TaskId>(aff.begin(), aff.end()) == got.affected);
            }
        }
    }
}

TEST_CASE("conflicts resolve last-write-wins and are reported") {
    auto g = gen::chain3();
    OptimizationSelection s;
    s.targeted = {set_output(0, NumericFormat::int8), set_input(1, NumericFormat::fp16)};
    auto r = propagate_formats(g, s);
    CHECK(r.tensor_formats.at("ab") == NumericFormat::fp16);
    REQUIRE(r.conflicts.size() == 1);
    CHECK(r.conflicts[0].tensor == "ab");
    CHECK(r.conflicts[0].earlier_task == 0);
    CHECK(r.conflicts[0].later_task == 1);
    // Back at baseline, so nothing is affected.
    CHECK(r.affected.empty());
}

TEST_CASE("property: post-propagation formats agree with the replay oracle") {
    for (std::uint64_t seed = 1; seed <= 300; ++seed) {
        gen::Rand r(seed);
        auto g = gen::random_dag(r, {.tasks = r.range(1, 40), .int8_baseline = r.chance(0.3)});
        auto s = gen::random_selection(r, g, 10);
        INFO("seed " << seed);
        auto want = replay(g, s);
        auto sim = simulate(g, s, P());
        check_consistent(g, sim, want);
        auto prop = propagate_formats(g, s);
        for (const auto& [id, f] : want) CHECK(fname(prop.tensor_formats.at(id)) == f);
        auto aff = touching_changed(g, want);
        CHECK(std::vector<TaskId>(aff.begin(), aff.end()) == prop.affected);
        for (auto id : prop.affected) {
            CHECK(std::binary_search(sim.affected_task_ids.begin(), sim.affected_task_ids.end(), id));
        }
    }
}

TEST_CASE("property: simulate is deterministic and changed tracks the effective config") {
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        gen::Rand r(seed);
        auto g = gen::random_dag(r, {.tasks = r.range(1, 30)});
        auto s = gen::random_selection(r, g, 8);
        auto a = simulate(g, s, P());
        auto b = simulate(g, s, P());
        CHECK(simulation_to_json(g, a).dump() == simulation_to_json(g, b).dump());
        CHECK(a.summary_opt == b.summary_opt);
        for (const auto& t : a.per_task) {
            CHECK(t.changed == !(t.effective == t.baseline_config));
            if (!t.changed) CHECK(t.optimized.bytes_moved == t.baseline.bytes_moved);
        }
        CHECK(close(a.summary_opt.total_latency, [&] {
            double s2 = 0;
            for (const auto& t : a.per_task) s2 += t.optimized.latency;
            return s2;
        }(), 1e-9));
    }
}

TEST_CASE("simulate: empty and fp16 identity on the fixture") {
    auto g = fixtures::unet().graph;
    auto none = simulate(g, {}, P());
    CHECK(none.summary_opt == none.summary_base);
    CHECK(none.delta_latency_pct == 0.0);
    CHECK(none.affected_task_ids.empty());

    OptimizationSelection fp16;
    fp16.preset = Preset::fp16_baseline;
    auto same = simulate(g, fp16, P());
    CHECK(same.summary_opt == same.summary_base);
    CHECK(same.delta_power_pct == 0.0);
    CHECK(same.affected_task_ids.empty());
}

TEST_CASE("simulate: int8 preset on the fixture") {
    auto g = fixtures::unet().graph;
    OptimizationSelection s;
    s.preset = Preset::int8_io_kernel;
    auto r = simulate(g, s, P());
    CHECK(r.delta_power_pct > 0);
    CHECK(r.delta_latency_pct > 0);
    bool regressed_softmax = false;
    for (std::size_t t = 0; t < g.tasks.size(); ++t) {
        const auto& pt = r.per_task[t];
        if (g.tasks[t].kind == TaskKind::pool) CHECK(pt.optimized.latency == pt.baseline.latency);
        if (g.tasks[t].kind == TaskKind::softmax && pt.optimized.latency > pt.baseline.latency) regressed_softmax = true;
    }
    CHECK(regressed_softmax);
}

TEST_CASE("unknown task ids are rejected") {
    auto g = gen::chain3();
    OptimizationSelection s;
    s.targeted = {set_input(9999, NumericFormat::int8)};
    try {
        (void)simulate(g, s, P());
        FAIL("expected UnknownTask");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UnknownTask);
        CHECK(e.detail()["task"] == 9999);
    }
    CHECK_THROWS_AS((void)enumerate_options(g, 3, {}, P()), Error);
}

TEST_CASE("property: preset equals the same config targeted at every task") {
    for (auto preset : kAllPresets) {
        for (const auto& g : {fixtures::unet().graph, fixtures::random_graph({.tasks = 60, .seed = 3})}) {
            OptimizationSelection a;
            a.preset = preset;
            OptimizationSelection b;
            for (const auto& t : g.tasks) {
                TaskConfig cur{t.inputs.empty() ? NumericFormat::fp16 : g.find_tensor(t.inputs[0])->format,
                               g.find_tensor(t.outputs[0])->format, t.kernel_format, t.sparsity, t.palette_bits};
                auto next = apply_preset(preset, cur);
                auto o = TaskOverride::full(t.id, next);
                if (preset != Preset::int8_io_kernel && preset != Preset::fp16_baseline) {
                    o.input.reset();
                    o.output.reset();
                }
                b.targeted.push_back(o);
            }
            auto ra = simulate(g, a, P());
            auto rb = simulate(g, b, P());
            INFO(preset_id(preset));
            CHECK(close(ra.summary_opt.total_latency, rb.summary_opt.total_latency));
            CHECK(close(ra.summary_opt.memory_power, rb.summary_opt.memory_power));
            CHECK(ra.summary_opt.total_weight_bytes == rb.summary_opt.total_weight_bytes);
        }
    }
}

TEST_CASE("options: counts on the fixture") {
    auto g = fixtures::unet().graph;
    Simulator sim(g, P());
    int convs = 0, concats = 0;
    for (const auto& t : g.tasks) {
        auto opts = sim.enumerate_options(t.id, {});
        if (t.kind == TaskKind::conv2d) {
            CHECK(opts.size() == 48);
            ++convs;
            auto n = std::count_if(opts.begin(), opts.end(), [](const OptimizationOption& o) {
                return o.cfg.input_format == NumericFormat::int8 && o.cfg.output_format == NumericFormat::int8;
            });
            CHECK(n == 12);
        }
        if (t.kind == TaskKind::concat) {
            CHECK(opts.size() == 4);
            ++concats;
        }
    }
    CHECK(convs > 0);
    CHECK(concats > 0);
}

TEST_CASE("property: option enumeration equals the nested-loop oracle") {
    const auto& op = oracle::default_profile();
    int tasks_checked = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        gen::Rand r(seed);
        auto g = gen::random_dag(r, {.tasks = r.range(1, 25), .int8_baseline = r.chance(0.3), .kernel_variety = r.chance(0.3)});
        const auto task = static_cast<std::size_t>(r.range(0, static_cast<int>(g.tasks.size()) - 1));
        auto got = enumerate_options(g, g.tasks[task].id, {}, P());
        auto want = oracle::options(oracle::mirror(g), task, op);
        INFO("seed " << seed << " task " << task);
        REQUIRE(got.size() == want.size());
        std::map<oracle::OptionTuple, const oracle::OracleOption*> by_tuple;
        for (const auto& w : want) by_tuple[w.tuple] = &w;
        REQUIRE(by_tuple.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            const auto& o = got[i];
            oracle::OptionTuple key{fname(o.cfg.input_format), fname(o.cfg.output_format), fname(o.cfg.kernel_format), o.cfg.sparsity};
            auto it = by_tuple.find(key);
            REQUIRE(it != by_tuple.end());
            CHECK(close(o.latency_savings, it->second->savings, 1e-9));
            CHECK(close(o.metrics.latency, it->second->self.latency));
            CHECK(o.metrics.bytes_moved == it->second->self.bytes);
            if (i > 0) CHECK(got[i - 1].latency_savings >= o.latency_savings);
        }
        ++tasks_checked;
    }
    CHECK(tasks_checked == 100);
}

TEST_CASE("options: ties keep the cross-product order") {
    // Weightless elementwise whose neighbours see no change in latency from I/O
    // formats: everything compute-bound, so all options tie.
    auto g = gen::Builder{}
                 .tensor("x", 10)
                 .tensor("y", 10)
                 .task(TaskKind::elementwise, {"x"}, {"y"}, 1'000'000)
                 .build();
    auto opts = enumerate_options(g, 0, {}, P());
    REQUIRE(opts.size() == 4);
    CHECK(opts[0].cfg.input_format == NumericFormat::fp16);
    CHECK(opts[0].cfg.output_format == NumericFormat::fp16);
    CHECK(opts[1].cfg.output_format == NumericFormat::int8);
    CHECK(opts[2].cfg.input_format == NumericFormat::int8);
    CHECK(opts[3].cfg.output_format == NumericFormat::int8);
}

TEST_CASE("planner: trivial budgets") {
    auto g = fixtures::unet().graph;
    const double base = Simulator(g, P()).baseline_summary().total_latency;
    auto met = plan_to_budget(g, P(), base);
    CHECK(met.status == PlanStatus::met);
    CHECK(met.selection.empty());
    auto inf = plan_to_budget(g, P(), 0.001);
    CHECK(inf.status == PlanStatus::infeasible);
    CHECK(inf.latency > 0.001);
    CHECK_THROWS_AS(plan_to_budget(g, P(), 0.0), Error);
}

TEST_CASE("planner: int8 preset budget met with a strict subset") {
    auto g = fixtures::unet().graph;
    OptimizationSelection preset;
    preset.preset = Preset::int8_io_kernel;
    const double budget = simulate(g, preset, P()).summary_opt.total_latency * 1.01;
    auto plan = plan_to_budget(g, P(), budget);
    REQUIRE(plan.status == PlanStatus::met);
    CHECK(plan.latency <= budget);
    CHECK(close(simulate(g, plan.selection, P()).summary_opt.total_latency, plan.latency));
    std::set<TaskId> touched;
    for (const auto& o : plan.selection.targeted) touched.insert(o.task);
    CHECK(touched.size() == plan.selection.targeted.size());
    CHECK(touched.size() < g.tasks.size());
}


TEST_CASE("planner: greedy meets every budget exhaustive search can meet on 6-task toys") {
    int feasible_cases = 0, infeasible_cases = 0;
    for (std::uint64_t seed = 1; seed <= 60; ++seed) {
        gen::Rand r(seed);
        auto g = gen::random_dag(r, {.tasks = 6});
        const double base = Simulator(g, P()).baseline_summary().total_latency;
        const double best = exhaustive_best(g);
        INFO("seed " << seed << " base " << base << " best " << best);
        REQUIRE(best <= base * (1 + 1e-12));
        for (double frac : {0.0, 0.25, 0.5, 0.75, 0.9, 1.0}) {
            const double budget = best + frac * (base - best);
            if (!(budget > 0)) continue;
            auto plan = plan_to_budget(g, P(), budget * (1 + 1e-12), toy_allowed);
            CHECK(plan.status == PlanStatus::met);
            ++feasible_cases;
        }
        if (best > 1e-6) {
            auto plan = plan_to_budget(g, P(), best * 0.999, toy_allowed);
            CHECK(plan.status == PlanStatus::infeasible);
            ++infeasible_cases;
        }
    }
    CHECK(feasible_cases > 300);
    CHECK(infeasible_cases > 50);
}
