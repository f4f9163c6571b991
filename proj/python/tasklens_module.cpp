#include <pybind11/pybind11.h>

#include <fmt/format.h>

#include "tasklens/diff.hpp"
#include "tasklens/error.hpp"
#include "tasklens/fixtures.hpp"
#include "tasklens/layout.hpp"
#include "tasklens/optimizer.hpp"
#include "tasklens/package.hpp"
#include "tasklens/report.hpp"

namespace py = pybind11;
using nlohmann::json;
using namespace tasklens;

namespace {

// Results cross the boundary as JSON text; the Python wrapper decodes them.
OptimizationSelection selection_arg(const std::string& text) {
    if (text.empty()) return {};
    return selection_from_json(json::parse(text));
}

HardwareProfile profile_arg(const std::string& path) { return path.empty() ? default_profile() : load_profile(path); }

std::string package_graph(const std::string& path) { return graph_to_json(parse_package(path).graph).dump(); }

std::string package_hash(const std::string& path) { return graph_hash(parse_package(path).graph); }

std::string run_simulate(const std::string& path, const std::string& selection, const std::string& profile) {
    const auto pkg = parse_package(path);
    const auto p = profile_arg(profile);
    return simulation_to_json(pkg.graph, simulate(pkg.graph, selection_arg(selection), p)).dump();
}

std::string run_metrics(const std::string& path, const std::string& selection, const std::string& profile) {
    const auto pkg = parse_package(path);
    const auto p = profile_arg(profile);
    const auto sim = simulate(pkg.graph, selection_arg(selection), p);
    return report::metrics_payload(pkg.graph, sim, !selection.empty()).dump();
}

std::string run_options(const std::string& path, int task, const std::string& selection, const std::string& profile) {
    const auto pkg = parse_package(path);
    const auto p = profile_arg(profile);
    json out = json::array();
    for (const auto& o : enumerate_options(pkg.graph, task, selection_arg(selection), p)) {
        out.push_back(option_to_json(o));
    }
    return out.dump();
}

std::string run_plan(const std::string& path, double budget, const std::string& profile) {
    const auto pkg = parse_package(path);
    const auto plan = plan_to_budget(pkg.graph, profile_arg(profile), budget);
    return json{{"status", plan.status == PlanStatus::met ? "met" : "infeasible"},
                {"latency", plan.latency},
                {"selection", selection_to_json(plan.selection)}}
        .dump();
}

std::string run_diff(const std::string& base, const std::string& target, const std::string& profile) {
    const auto a = parse_package(base);
    const auto b = parse_package(target);
    return diff_to_json(diff_models(a.graph, {}, b.graph, {}, profile_arg(profile))).dump();
}

std::string run_layout(const std::string& path) { return layout_to_json(layout_graph(parse_package(path).graph)).dump(); }

void write_fixture(const std::string& kind, const std::string& out, int tasks, std::uint64_t seed) {
    ModelPackage pkg;
    if (kind == "unet") pkg = fixtures::unet();
    else if (kind == "unet-plus") pkg = fixtures::unet_plus();
    else if (kind == "random") pkg = fixtures::random_package({.tasks = tasks, .seed = seed});
    else throw Error(ErrorCode::Usage, "unknown fixture kind " + kind);
    write_package_dir(pkg.members, out);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Native core of the tasklens workbench";

    // Module-lifetime reference; released so no destructor runs after interpreter teardown.
    static PyObject* tasklens_error = py::exception<Error>(m, "TasklensError").release().ptr();
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            PyErr_SetString(tasklens_error, fmt::format("{}: {}", error_code_name(e.code()), e.what()).c_str());
        }
    });

    m.def("graph", &package_graph, py::arg("path"));
    m.def("graph_hash", &package_hash, py::arg("path"));
    m.def("simulate", &run_simulate, py::arg("path"), py::arg("selection") = "", py::arg("profile") = "");
    m.def("metrics", &run_metrics, py::arg("path"), py::arg("selection") = "", py::arg("profile") = "");
    m.def("options", &run_options, py::arg("path"), py::arg("task"), py::arg("selection") = "",
          py::arg("profile") = "");
    m.def("plan_to_budget", &run_plan, py::arg("path"), py::arg("budget_ms"), py::arg("profile") = "");
    m.def("diff", &run_diff, py::arg("base"), py::arg("target"), py::arg("profile") = "");
    m.def("layout", &run_layout, py::arg("path"));
    m.def("write_fixture", &write_fixture, py::arg("kind"), py::arg("out"), py::arg("tasks") = 200,
          py::arg("seed") = 1);
    m.def("percent_delta", &percent_delta, py::arg("base"), py::arg("updated"));
    m.def("round_percent", &round_percent, py::arg("pct"));
    m.def("default_profile", [] { return profile_to_json(default_profile()).dump(); });
}
