#include <doctest.h>

#include <map>

#include "diff_oracle.hpp"
#include "gen.hpp"
#include "tasklens/diff.hpp"
#include "tasklens/fixtures.hpp"

using namespace tasklens;
using diff_oracle::reference_match;

namespace {

const HardwareProfile& P() { return default_profile(); }

void check_partition(const ModelGraph& a, const ModelGraph& b, const DiffResult& d) {
    std::map<TaskId, int> base_seen, target_seen;
    for (const auto& m : d.matched) {
        ++base_seen[m.base];
        ++target_seen[m.target];
    }
    for (auto id : d.removed) ++base_seen[id];
    for (auto id : d.added) ++target_seen[id];
    CHECK(base_seen.size() == a.tasks.size());
    CHECK(target_seen.size() == b.tasks.size());
    for (const auto& [id, n] : base_seen) CHECK(n == 1);
    for (const auto& [id, n] : target_seen) CHECK(n == 1);
}

ModelGraph three(const std::string& n0, const std::string& n1, const std::string& n2) {
    return gen::Builder{}
        .tensor("x", 100)
        .tensor("a", 100)
        .tensor("b", 100)
        .tensor("c", 100)
        .task(TaskKind::conv2d, {"x"}, {"a"}, 5000, 300, n0)
        .task(TaskKind::pool, {"a"}, {"b"}, 400, 0, n1)
        .task(TaskKind::elementwise, {"b"}, {"c"}, 100, 0, n2)
        .build();
}

}  // namespace

TEST_CASE("identity diff") {
    for (const auto& g : {fixtures::unet().graph, fixtures::unet_plus().graph}) {
        auto d = diff_models(g, {}, g, {}, P());
        CHECK(d.added.empty());
        CHECK(d.removed.empty());
        CHECK(d.matched.size() == g.tasks.size());
        for (const auto& m : d.matched) {
            CHECK(m.base == m.target);
            CHECK_FALSE(m.changed);
            CHECK(m.pass == MatchPass::name);
        }
        CHECK(d.summary_base == d.summary_target);
    }
}

TEST_CASE("unet vs unet-plus: the two added convolutions") {
    fixtures::FixtureInfo info;
    auto plus = fixtures::unet_plus(&info);
    auto d = diff_models(fixtures::unet().graph, {}, plus.graph, {}, P());
    CHECK(d.added == info.added_convs);
    CHECK(d.removed.empty());
    CHECK(d.matched.size() == 51);
    CHECK(d.summary_target.total_latency > d.summary_base.total_latency);
}

TEST_CASE("a renamed task is matched structurally") {
    auto a = three("conv", "pool", "relu");
    auto b = three("conv", "pool_renamed", "relu");
    auto d = diff_models(a, {}, b, {}, P());
    CHECK(d.added.empty());
    CHECK(d.removed.empty());
    REQUIRE(d.matched.size() == 3);
    CHECK(d.matched[1].pass == MatchPass::structure);
    CHECK(d.matched[1].target == 1);
    CHECK_FALSE(d.matched[1].changed);
    auto ref = reference_match(a, b);
    for (const auto& m : d.matched) CHECK(ref.at(m.base) == m.target);
}

TEST_CASE("selection differences show as changed") {
    auto g = fixtures::unet().graph;
    OptimizationSelection s;
    s.preset = Preset::int8_io_kernel;
    auto d = diff_models(g, {}, g, s, P());
    CHECK(d.added.empty());
    int changed = 0;
    for (const auto& m : d.matched) changed += m.changed ? 1 : 0;
    CHECK(changed == static_cast<int>(g.tasks.size()));
    auto j = diff_to_json(d);
    CHECK(j["matched"].size() == g.tasks.size());
    CHECK(j["matched"][0]["matched_by"] == "name");
}

TEST_CASE("property: partition, reference matching and symmetry on random pairs") {
    const std::vector<std::string> names = {"conv", "pool", "relu", "add", "cat", "head", "mm", "norm"};
    int symmetric_checked = 0;
    for (std::uint64_t seed = 1; seed <= 200; ++seed) {
        gen::Rand r(seed);
        auto a = gen::random_dag(r, {.tasks = r.range(0, 15)});
        auto b = r.chance(0.5) ? a : gen::random_dag(r, {.tasks = r.range(0, 15)});
        // Names from a small pool so uniqueness and collisions both occur.
        for (auto* g : {&a, &b}) {
            for (auto& t : g->tasks) t.name = r.pick(names) + std::to_string(r.range(0, 3));
        }
        if (r.chance(0.5) && !b.tasks.empty()) {
            // Copy a few structural tuples across so pass two has work to do.
            for (std::size_t i = 0; i < std::min(a.tasks.size(), b.tasks.size()); ++i) {
                if (r.chance(0.3)) {
                    b.tasks[i].kind = a.tasks[i].kind;
                    b.tasks[i].weight_count = a.tasks[i].weight_count;
                    b.tasks[i].macs = a.tasks[i].macs;
                    if (b.tasks[i].kind == TaskKind::concat && b.tasks[i].inputs.size() < 2) b.tasks[i].kind = TaskKind::elementwise;
                }
            }
        }
        auto d = diff_models(a, {}, b, {}, P());
        INFO("seed " << seed);
        check_partition(a, b, d);
        auto ref = reference_match(a, b);
        CHECK(d.matched.size() == ref.size());
        for (const auto& m : d.matched) CHECK(ref.at(m.base) == m.target);
        for (std::size_t i = 1; i < d.matched.size(); ++i) CHECK(d.matched[i - 1].base < d.matched[i].base);

        // With no repeated structural keys the matching is order independent.
        auto keys_unique = [](const ModelGraph& g) {
            std::set<std::tuple<TaskKind, std::int64_t, std::int64_t>> k;
            for (const auto& t : g.tasks) if (!k.emplace(t.kind, t.weight_count, t.work()).second) return false;
            return true;
        };
        if (keys_unique(a) && keys_unique(b)) {
            auto back = diff_models(b, {}, a, {}, P());
            CHECK(back.removed == d.added);
            CHECK(back.added == d.removed);
            ++symmetric_checked;
        }
        auto self = diff_models(a, {}, a, {}, P());
        CHECK(self.added.empty());
        CHECK(self.removed.empty());
    }
    CHECK(symmetric_checked > 50);
}
