#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tasklens/fixtures.hpp"
#include "tasklens/optimizer.hpp"
#include "tasklens/package.hpp"
#include "tasklens/report.hpp"
#include "tempdir.hpp"

using nlohmann::json;
using namespace tasklens;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Run run(const TempDir& dir, const std::string& args) {
    const auto err_path = dir.path / "stderr.txt";
    const std::string cmd = std::string("cd '") + dir.path.string() + "' && DATA_DIR='" +
                            (dir.path / "data").string() + "' '" + TASKLENS_CLI + "' " + args + " 2>'" +
                            err_path.string() + "'";
    Run r;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
    const int status = ::pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = slurp(err_path);
    return r;
}

}  // namespace

TEST_CASE("fixture output is deterministic and parses") {
    TempDir dir("tl_cli");
    REQUIRE(run(dir, "fixture unet -o a/unet.tgz").code == 0);
    REQUIRE(run(dir, "fixture unet -o b/unet.tgz").code == 0);
    CHECK(slurp(dir.path / "a/unet.tgz") == slurp(dir.path / "b/unet.tgz"));
    REQUIRE(run(dir, "fixture unet -o unet_dir").code == 0);
    auto from_tgz = parse_package(dir.path / "a/unet.tgz");
    auto from_dir = parse_package(dir.path / "unet_dir");
    CHECK(graph_hash(from_tgz.graph) == graph_hash(from_dir.graph));
    CHECK(graph_hash(from_tgz.graph) == graph_hash(fixtures::unet().graph));

    auto r = run(dir, "fixture random --tasks 500 --seed 7 -o r.tgz");
    CHECK(r.code == 0);
    auto big = parse_package(dir.path / "r.tgz");
    CHECK(big.graph.tasks.size() == 500);
    CHECK(validate_graph(big.graph).empty());
}

TEST_CASE("exit codes") {
    TempDir dir("tl_cli");
    REQUIRE(run(dir, "fixture unet -o unet.tgz").code == 0);

    CHECK(run(dir, "").code == 2);
    CHECK(run(dir, "bogus").code == 2);
    CHECK(run(dir, "report unet.tgz --format xml").code == 2);
    auto missing = run(dir, "report nothing-here.tgz");
    CHECK(missing.code == 2);
    CHECK(missing.err.find("nothing-here") != std::string::npos);
    auto sort = run(dir, "report unet.tgz --sort speed");
    CHECK(sort.code == 2);
    CHECK(sort.err.find("total_time") != std::string::npos);
    CHECK(run(dir, "optimize unet.tgz --preset nope").code == 2);
    CHECK(run(dir, "optimize unet.tgz --preset int8-io-kernel --budget-ms 3").code == 2);
    CHECK(run(dir, "optimize unet.tgz --budget-ms -1").code == 2);

    auto infeasible = run(dir, "optimize unet.tgz --budget-ms 0.0001");
    CHECK(infeasible.code == 3);
    CHECK(infeasible.err.find("infeasible") != std::string::npos);

    std::ofstream(dir.path / "blocker") << "x";  // a file where the data dir should be
    CHECK(run(dir, "ingest unet.tgz --data-dir blocker/sub").code == 4);

    CHECK(run(dir, "optimize unet.tgz --preset int8-io-kernel").code == 0);
    CHECK(run(dir, "--help").code == 0);
}

TEST_CASE("ingest stores once and reports by id") {
    TempDir dir("tl_cli");
    REQUIRE(run(dir, "fixture unet -o unet.tgz").code == 0);
    auto first = run(dir, "ingest unet.tgz --user ana");
    REQUIRE(first.code == 0);
    std::istringstream lines(first.out);
    std::string id, url;
    lines >> id >> url;
    CHECK(id.size() == 26);
    CHECK(url == "/m/" + id);
    auto again = run(dir, "ingest unet.tgz --user ana");
    CHECK(again.code == 0);
    CHECK(again.out.substr(0, 26) == id);
    CHECK(again.err.find("already stored") != std::string::npos);

    auto by_id = run(dir, "report " + id + " --format json");
    auto by_path = run(dir, "report unet.tgz --format json");
    CHECK(by_id.code == 0);
    CHECK(json::parse(by_id.out) == json::parse(by_path.out));
}

TEST_CASE("report json equals the API payload") {
    TempDir dir("tl_cli");
    REQUIRE(run(dir, "fixture unet -o unet.tgz").code == 0);
    std::ofstream(dir.path / "sel.json") << R"({"preset":"int8-io-kernel"})";
    auto r = run(dir, "report unet.tgz --selection sel.json --format json");
    REQUIRE(r.code == 0);
    const auto pkg = fixtures::unet();
    const auto sim = simulate(pkg.graph, OptimizationSelection{Preset::int8_io_kernel, {}}, default_profile());
    CHECK(json::parse(r.out) == report::metrics_payload(pkg.graph, sim, true));

    auto top = run(dir, "report unet.tgz --format json --sort total_time --top 3");
    REQUIRE(top.code == 0);
    auto doc = json::parse(top.out);
    CHECK(doc["rows"].size() == 3);
    CHECK(doc["total_rows"] == 51);

    auto csv = run(dir, "report unet.tgz --format csv");
    CHECK(std::count(csv.out.begin(), csv.out.end(), '\n') == 52);
    auto table = run(dir, "report unet.tgz");
    CHECK(table.out.find("51 of 51 tasks") != std::string::npos);
}

TEST_CASE("optimize emits a reusable selection") {
    TempDir dir("tl_cli");
    REQUIRE(run(dir, "fixture unet -o unet.tgz").code == 0);
    const auto base = simulate(fixtures::unet().graph, {}, default_profile()).summary_base.total_latency;
    const auto int8 = simulate(fixtures::unet().graph, OptimizationSelection{Preset::int8_io_kernel, {}},
                               default_profile()).summary_opt.total_latency;
    const double budget = int8 * 1.01;
    CHECK(budget < base);
    auto r = run(dir, "optimize unet.tgz --budget-ms " + std::to_string(budget) + " --emit plan.json --format json");
    REQUIRE(r.code == 0);
    auto doc = json::parse(r.out);
    CHECK(doc["status"] == "ok");
    CHECK(doc["optimized"]["total_latency"].get<double>() <= budget);

    auto replay = run(dir, "optimize unet.tgz --selection plan.json --format json");
    REQUIRE(replay.code == 0);
    CHECK(json::parse(replay.out)["optimized"] == doc["optimized"]);
}

TEST_CASE("diff reports the added convolutions") {
    TempDir dir("tl_cli");
    REQUIRE(run(dir, "fixture unet -o a.tgz").code == 0);
    REQUIRE(run(dir, "fixture unet-plus -o b.tgz").code == 0);
    auto r = run(dir, "diff a.tgz b.tgz");
    CHECK(r.code == 0);
    CHECK(r.out.rfind("2 added, 0 removed", 0) == 0);
    auto j = run(dir, "diff a.tgz b.tgz --format json");
    auto doc = json::parse(j.out);
    CHECK(doc["added"].size() == 2);
    CHECK(doc["matched"].size() == 51);
    CHECK(run(dir, "diff a.tgz a.tgz").out.rfind("0 added, 0 removed, 0 changed, 51 matched", 0) == 0);
}
