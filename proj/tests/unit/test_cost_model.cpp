#include <doctest.h>

#include <cmath>

#include "gen.hpp"
#include "oracle.hpp"
#include "tasklens/cost_model.hpp"
#include "tasklens/error.hpp"
#include "tasklens/fixtures.hpp"
#include "tasklens/optimizer.hpp"

using namespace tasklens;
using doctest::Approx;

namespace {

const HardwareProfile& P() { return default_profile(); }

bool close(double a, double b, double rel = 1e-12) {
    return std::abs(a - b) <= rel * std::max({1.0, std::abs(a), std::abs(b)});
}

// One task with explicit tensor sizes: inputs ins[i] elements, outputs outs[i].
ModelGraph single(TaskKind kind, std::vector<std::int64_t> ins, std::vector<std::int64_t> outs, std::int64_t macs,
                  std::int64_t weights = 0) {
    gen::Builder b;
    std::vector<std::string> in_ids, out_ids;
    for (std::size_t i = 0; i < ins.size(); ++i) {
        in_ids.push_back("i" + std::to_string(i));
        b.tensor(in_ids.back(), ins[i]);
    }
    for (std::size_t i = 0; i < outs.size(); ++i) {
        out_ids.push_back("o" + std::to_string(i));
        b.tensor(out_ids.back(), outs[i]);
    }
    b.task(kind, in_ids, out_ids, macs, weights);
    return b.build();
}

TaskConfig all(NumericFormat f) { return {f, f, f, 0.0, 0}; }

}  // namespace

TEST_CASE("default profile matches the data file") {
    const auto& o = oracle::default_profile();
    CHECK(P().name == "generic-npu-v1");
    CHECK(P().bandwidth == o.bandwidth);
    CHECK(P().convert_throughput == o.convert);
    CHECK(P().energy_per_byte == o.energy_per_byte);
    CHECK(P().sparse_compute_efficiency == o.efficiency);
    for (auto k : kAllKinds) {
        for (auto f : kAllFormats) {
            CHECK(P().throughput_for(k, f) == o.throughput(std::string(to_string(k)), std::string(to_string(f))));
        }
    }
    auto again = profile_from_json(profile_to_json(P()));
    CHECK(profile_to_json(again) == profile_to_json(P()));
}

TEST_CASE("profile validation") {
    auto doc = profile_to_json(P());
    doc["bandwidth"] = 0;
    CHECK_THROWS_AS(profile_from_json(doc), Error);
    doc = profile_to_json(P());
    doc["throughput"]["softmax"].erase("int8");
    CHECK_THROWS_AS(profile_from_json(doc), Error);
    doc = profile_to_json(P());
    doc["throughput"]["pool"]["fp16"] = -1;
    CHECK_THROWS_AS(profile_from_json(doc), Error);
}

TEST_CASE("weight bytes worked examples") {
    CHECK(weight_bytes(1'000'000, all(NumericFormat::fp16)) == 2'000'000);
    CHECK(weight_bytes(1'000'000, {NumericFormat::int8, NumericFormat::int8, NumericFormat::int8, 0.5, 0}) == 625'000);
    CHECK(weight_bytes(0, {NumericFormat::int4, NumericFormat::int8, NumericFormat::int2, 0.75, 3}) == 0);
    CHECK(weight_bytes(1'000'000, {NumericFormat::fp16, NumericFormat::fp16, NumericFormat::fp16, 0.0, 4}) == 500'032);
}

TEST_CASE("property: weight bytes match the formula oracle") {
    gen::Rand r(11);
    for (int i = 0; i < 5000; ++i) {
        const std::int64_t w = r.chance(0.1) ? r.range64(0, 20) : r.range64(0, 50'000'000);
        TaskConfig c;
        c.kernel_format = r.pick(std::vector<NumericFormat>(kAllFormats.begin(), kAllFormats.end()));
        c.sparsity = r.pick(std::vector<double>{0.0, 0.1, 0.25, 0.5, 0.75, 0.9});
        c.palette_bits = r.chance(0.2) ? r.range(1, 8) : 0;
        INFO(w << " " << to_string(c.kernel_format) << " " << c.sparsity << " " << c.palette_bits);
        CHECK(weight_bytes(w, c) == oracle::weight_bytes(w, bits(c.kernel_format), c.sparsity, c.palette_bits));
    }
}

TEST_CASE("conv worked example, fp16 and int8") {
    auto g = single(TaskKind::conv2d, {500'000}, {500'000}, 1'000'000'000, 1'000'000);
    auto m = estimate_task(g.tasks[0], g, all(NumericFormat::fp16), P());
    CHECK(m.bytes_moved == 4'000'000);
    CHECK(m.compute_time == Approx(0.2).epsilon(1e-12));
    CHECK(m.memory_time == Approx(0.04).epsilon(1e-12));
    CHECK(m.latency == Approx(0.2).epsilon(1e-12));
    CHECK(m.energy == Approx(80).epsilon(1e-12));
    CHECK(m.memory_power == Approx(400).epsilon(1e-12));

    auto q = estimate_task(g.tasks[0], g, all(NumericFormat::int8), P());
    CHECK(q.bytes_moved == 2'000'000);
    CHECK(q.compute_time == Approx(0.1).epsilon(1e-12));
    CHECK(q.memory_time == Approx(0.02).epsilon(1e-12));
    CHECK(q.latency == Approx(0.1).epsilon(1e-12));
    CHECK(q.energy == Approx(40).epsilon(1e-12));
    CHECK(q.memory_power == Approx(400).epsilon(1e-12));
}

TEST_CASE("pool is compute-bound at every format") {
    auto g = single(TaskKind::pool, {400'000}, {100'000}, 400'000);
    auto m = estimate_task(g.tasks[0], g, all(NumericFormat::fp16), P());
    CHECK(m.compute_time == Approx(0.04).epsilon(1e-12));
    CHECK(m.memory_time == Approx(0.01).epsilon(1e-12));
    CHECK(m.latency == Approx(0.04).epsilon(1e-12));
    auto q = estimate_task(g.tasks[0], g, all(NumericFormat::int8), P());
    CHECK(q.latency == m.latency);
}

TEST_CASE("softmax regresses under int8 I/O") {
    auto g = single(TaskKind::softmax, {1'000'000}, {1'000'000}, 1'000'000);
    auto f = estimate_task(g.tasks[0], g, all(NumericFormat::fp16), P());
    auto q = estimate_task(g.tasks[0], g, all(NumericFormat::int8), P());
    CHECK(f.conversion_overhead == 0.0);
    CHECK(q.conversion_overhead == Approx(0.04).epsilon(1e-12));
    CHECK(q.latency > f.latency);
    CHECK(q.latency == Approx(0.14).epsilon(1e-12));
}

TEST_CASE("unsupported compute format is an error with the task id") {
    auto g = single(TaskKind::softmax, {10}, {10}, 10);
    try {
        (void)estimate_task(g.tasks[0], g, all(NumericFormat::int4), P());
        FAIL("expected UnsupportedFormat");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UnsupportedFormat);
        CHECK(e.detail()["task"] == 0);
    }
}

TEST_CASE("palettized weights compute at fp16 and ignore sparsity") {
    auto g = single(TaskKind::conv2d, {1000}, {1000}, 100'000'000, 10'000);
    TaskConfig c{NumericFormat::int8, NumericFormat::int8, NumericFormat::int4, 0.5, 4};
    auto m = estimate_task(g.tasks[0], g, c, P());
    CHECK(m.macs_effective == 100'000'000.0);
    CHECK(m.compute_time == Approx(100'000'000.0 / 5e9).epsilon(1e-12));
    CHECK(m.weight_bytes == 5000 + 32);
}

TEST_CASE("property: per-task pricing equals the independent formula oracle") {
    const auto& op = oracle::default_profile();
    int priced = 0, unsupported = 0;
    for (std::uint64_t seed = 1; seed <= 300; ++seed) {
        gen::Rand r(seed);
        auto g = gen::random_dag(r, {.tasks = 12, .int8_baseline = true, .kernel_variety = true});
        auto mirror = oracle::mirror(g);
        for (std::size_t i = 0; i < g.tasks.size(); ++i) {
            const auto& t = g.tasks[i];
            std::vector<NumericFormat> ins, outs;
            std::map<std::string, std::string> formats = mirror.formats;
            for (const auto& id : t.inputs) {
                ins.push_back(r.pick(std::vector<NumericFormat>{NumericFormat::fp16, NumericFormat::int8, NumericFormat::int4, NumericFormat::fp32}));
                formats[id] = std::string(to_string(ins.back()));
            }
            for (const auto& id : t.outputs) {
                outs.push_back(r.pick(std::vector<NumericFormat>{NumericFormat::fp16, NumericFormat::int8, NumericFormat::int2}));
                formats[id] = std::string(to_string(outs.back()));
            }
            KernelConfig k{r.pick(std::vector<NumericFormat>{NumericFormat::fp16, NumericFormat::int8, NumericFormat::int4, NumericFormat::int2}),
                           r.pick(std::vector<double>{0.0, 0.25, 0.5, 0.75}), r.chance(0.15) ? r.range(1, 8) : 0};
            auto want = oracle::price_in(mirror, i, formats, {std::string(to_string(k.kernel_format)), k.sparsity, k.palette_bits}, op);
            if (!want) {
                CHECK_THROWS_AS((void)price_task(t, g, ins, outs, k, P()), Error);
                ++unsupported;
                continue;
            }
            auto got = price_task(t, g, ins, outs, k, P());
            INFO("seed " << seed << " task " << i);
            CHECK(got.bytes_moved == want->bytes);
            CHECK(got.weight_bytes == want->weights);
            CHECK(close(got.compute_time, want->compute));
            CHECK(close(got.memory_time, want->memory));
            CHECK(close(got.conversion_overhead, want->overhead));
            CHECK(close(got.latency, want->latency));
            CHECK(close(got.energy, want->energy));
            CHECK(close(got.memory_power, want->power));
            CHECK(close(got.macs_effective, want->macs));
            ++priced;
        }
    }
    CHECK(priced > 2000);
    CHECK(unsupported > 0);
}

TEST_CASE("property: roofline, non-negativity, determinism") {
    for (std::uint64_t seed = 1; seed <= 200; ++seed) {
        gen::Rand r(seed);
        auto g = gen::random_dag(r, {.tasks = 15});
        for (const auto& t : g.tasks) {
            for (auto io : {NumericFormat::fp16, NumericFormat::int8}) {
                for (auto kf : {NumericFormat::fp16, NumericFormat::int8, NumericFormat::int4}) {
                    TaskConfig c{io, io, kf, r.pick(std::vector<double>{0.0, 0.5}), 0};
                    if (!t.has_weights() && kf != NumericFormat::fp16) continue;
                    auto m = estimate_task(t, g, c, P());
                    CHECK(m.latency >= m.compute_time);
                    CHECK(m.latency >= m.memory_time);
                    CHECK(m.latency == std::max(m.compute_time, m.memory_time) + m.conversion_overhead);
                    CHECK(m.compute_time >= 0);
                    CHECK(m.energy >= 0);
                    CHECK(m.memory_power >= 0);
                    if (m.latency > 0) CHECK(m.memory_power == m.energy / m.latency);
                    CHECK(estimate_task(t, g, c, P()) == m);
                }
            }
        }
    }
}

TEST_CASE("property: fewer bits never move more bytes") {
    const std::vector<NumericFormat> desc = {NumericFormat::fp32, NumericFormat::fp16, NumericFormat::int8,
                                             NumericFormat::int4, NumericFormat::int2};
    gen::Rand r(5);
    for (int trial = 0; trial < 2000; ++trial) {
        const std::int64_t w = r.range64(0, 5'000'000);
        const double s = r.pick(std::vector<double>{0.0, 0.25, 0.5, 0.75});
        for (std::size_t i = 1; i < desc.size(); ++i) {
            CHECK(weight_bytes(w, {NumericFormat::fp16, NumericFormat::fp16, desc[i], s, 0}) <=
                  weight_bytes(w, {NumericFormat::fp16, NumericFormat::fp16, desc[i - 1], s, 0}));
        }
    }
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        gen::Rand rr(seed);
        auto g = gen::random_dag(rr, {.tasks = 10});
        for (const auto& t : g.tasks) {
            std::uint64_t prev = UINT64_MAX;
            for (auto f : desc) {
                // Pool prices every format, so bytes can be compared without support gaps.
                auto copy = t;
                copy.kind = TaskKind::pool;
                copy.weight_count = 0;
                auto m = estimate_task(copy, g, {f, f, NumericFormat::fp16, 0.0, 0}, P());
                CHECK(m.bytes_moved <= prev);
                prev = m.bytes_moved;
            }
        }
    }
}

TEST_CASE("property: more sparsity means fewer weight bytes") {
    gen::Rand r(6);
    const std::vector<double> levels = {0.0, 0.1, 0.25, 0.5, 0.75, 0.9};
    for (int trial = 0; trial < 3000; ++trial) {
        const std::int64_t w = r.range64(8, 10'000'000);
        for (auto f : {NumericFormat::fp16, NumericFormat::int8, NumericFormat::int4}) {
            for (std::size_t i = 1; i < levels.size(); ++i) {
                if (levels[i - 1] == 0.0 && levels[i] * bits(f) <= 1.0) continue;  // bitmask costs 1 bit per weight
                INFO(w << " " << to_string(f) << " " << levels[i]);
                CHECK(weight_bytes(w, {f, f, f, levels[i], 0}) < weight_bytes(w, {f, f, f, levels[i - 1], 0}));
            }
        }
    }
}

TEST_CASE("summaries") {
    SUBCASE("single task") {
        TaskMetrics m;
        m.latency = 0.2;
        m.energy = 80;
        std::vector<TaskMetrics> v{m};
        auto s = summarize(v);
        CHECK(s.total_latency == 0.2);
        CHECK(s.memory_power == Approx(400).epsilon(1e-12));
        REQUIRE(s.achieved_fps);
        CHECK(*s.achieved_fps == Approx(5000).epsilon(1e-12));
    }
    SUBCASE("empty") {
        auto s = summarize(std::vector<TaskMetrics>{});
        CHECK(s.total_latency == 0);
        CHECK(s.total_energy == 0);
        CHECK_FALSE(s.achieved_fps);
    }
    SUBCASE("fixture sums") {
        auto g = fixtures::unet().graph;
        Simulator sim(g, P());
        const auto& base = sim.baseline();
        REQUIRE(base.size() == 51);
        long double sum = 0;
        for (const auto& m : base) sum += m.latency;
        CHECK(close(sim.baseline_summary().total_latency, static_cast<double>(sum), 1e-9));
    }
}

TEST_CASE("property: summary totals equal brute-force sums") {
    for (std::uint64_t seed = 1; seed <= 300; ++seed) {
        gen::Rand r(seed);
        std::vector<TaskMetrics> v(static_cast<std::size_t>(r.range(1, 60)));
        long double lat = 0, en = 0;
        std::uint64_t bytes = 0, wb = 0;
        for (auto& m : v) {
            m.latency = r.range(0, 1'000'000) * 1e-6;
            m.energy = r.range(0, 1'000'000) * 1e-3;
            m.bytes_moved = static_cast<std::uint64_t>(r.range64(0, 1'000'000'000));
            m.weight_bytes = static_cast<std::uint64_t>(r.range64(0, 1'000'000));
            lat += m.latency;
            en += m.energy;
            bytes += m.bytes_moved;
            wb += m.weight_bytes;
        }
        auto s = summarize(v);
        CHECK(close(s.total_latency, static_cast<double>(lat), 1e-9));
        CHECK(close(s.total_energy, static_cast<double>(en), 1e-9));
        CHECK(s.total_bytes_moved == bytes);
        CHECK(s.total_weight_bytes == wb);
        if (s.total_latency > 0) CHECK(close(s.memory_power, s.total_energy / s.total_latency, 1e-12));
    }
}

TEST_CASE("percent delta and display rounding") {
    CHECK(percent_delta(10, 5) == 50.0);
    CHECK(percent_delta(10, 15) == -50.0);
    CHECK(round_percent(percent_delta(7.5, 7.5)) == 0.0);
    CHECK(round_percent(percent_delta(401.21, 228.12)) == 43.14);
    CHECK(round_percent(percent_delta(401.21, 156.72)) == 60.94);
    CHECK(round_percent(percent_delta(401.21, 106.21)) == 73.53);
    CHECK(round_percent(0.125) == 0.13);
    CHECK(round_percent(-0.125) == -0.13);
    CHECK(std::signbit(round_percent(-0.001)) == false);
    try {
        (void)percent_delta(0, 1);
        FAIL("expected DivisionByZero");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DivisionByZero);
    }
    CHECK(percent_delta_or_zero(0, 0) == 0.0);
}

TEST_CASE("property: rounding equals exact rational arithmetic on hundredths") {
    // Inputs given to two decimals, as displayed values are.
    gen::Rand r(99);
    for (int i = 0; i < 200000; ++i) {
        const std::int64_t base = r.range64(1, 1'000'000);
        const std::int64_t upd = r.range64(0, 2'000'000);
        const double got = round_percent(percent_delta(base / 100.0, upd / 100.0));
        const double want = static_cast<double>(oracle::percent_hundredths(base, upd)) / 100.0;
        INFO(base << " -> " << upd);
        CHECK(std::abs(got - want) < 1e-9);
    }
    for (auto [b, u] : {std::pair{40121, 10621}, {40121, 22812}, {40121, 15672}, {4268, 3523}, {4268, 3298}}) {
        CHECK(std::abs(round_percent(percent_delta(b / 100.0, u / 100.0)) -
                       static_cast<double>(oracle::percent_hundredths(b, u)) / 100.0) < 1e-9);
    }
}
