// tasklens: batch front end for ingesting, reporting, optimizing and diffing models.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "tasklens/api_server.hpp"
#include "tasklens/diff.hpp"
#include "tasklens/error.hpp"
#include "tasklens/fixtures.hpp"
#include "tasklens/optimizer.hpp"
#include "tasklens/package.hpp"
#include "tasklens/report.hpp"
#include "tasklens/workspace.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tasklens;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitIo = 4;

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::Io:
        case ErrorCode::StorageFull: return kExitIo;
        default: return kExitUsage;
    }
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::NotFound, fmt::format("cannot read {}", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, fmt::format("cannot write {}", path.string()));
    out << text;
}

std::string env_or(const char* name, std::string fallback) {
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : fallback;
}

HardwareProfile profile_for(const std::string& path) {
    return path.empty() ? default_profile() : load_profile(path);
}

// A package path, or a model id stored in the data directory.
ModelPackage open_model(const std::string& ref, const std::string& data_dir) {
    if (fs::exists(ref)) return parse_package(ref);
    if (!data_dir.empty() && fs::exists(fs::path(data_dir) / "models" / ref)) {
        Workspace ws(data_dir);
        return *ws.load_package(ref);
    }
    throw Error(ErrorCode::NotFound, fmt::format("no package or stored model named '{}'", ref));
}

OptimizationSelection read_selection(const std::string& path) {
    json doc;
    try {
        doc = json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::SchemaError, fmt::format("{}: {}", path, e.what()));
    }
    // Analyses and plans wrap the selection; accept both shapes.
    if (doc.contains("selection")) doc = doc["selection"];
    return selection_from_json(doc);
}

std::string package_bytes(const fs::path& path) {
    if (fs::is_directory(path)) return archive::write_tgz(read_package_dir(path));
    return read_text(path);
}

std::string pct(double v) { return fmt::format("{:.2f}%", round_percent(v)); }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Inspect, optimize and compare compiled model packages"};
    app.require_subcommand(1);

    std::string data_dir = env_or("DATA_DIR", "data");
    std::string profile_path = env_or("PROFILE_PATH", "");
    std::string user = env_or("USER", "local");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Store a package in the workspace");
    std::string ingest_pkg;
    ingest->add_option("package", ingest_pkg, "Package directory or .tgz")->required();
    ingest->add_option("--data-dir", data_dir, "Workspace root");
    ingest->add_option("--user", user, "Owner id");

    // report
    auto* report_cmd = app.add_subcommand("report", "Per-task metrics report");
    std::string report_ref, selection_path, format = "table", sort_col;
    std::size_t top = 0;
    report_cmd->add_option("model", report_ref, "Package path or stored model id")->required();
    report_cmd->add_option("--data-dir", data_dir, "Workspace root");
    report_cmd->add_option("--profile", profile_path, "Hardware profile JSON");
    report_cmd->add_option("--selection", selection_path, "Selection or analysis JSON");
    report_cmd->add_option("--format", format, "table, json or csv")->check(CLI::IsMember({"table", "json", "csv"}));
    report_cmd->add_option("--sort", sort_col, "Column id to sort by (descending)");
    report_cmd->add_option("--top", top, "Keep only the first N rows");

    // optimize
    auto* optimize = app.add_subcommand("optimize", "Apply a preset or selection, or plan to a latency budget");
    std::string opt_pkg, preset_name, opt_selection, emit_path;
    double budget_ms = 0;
    optimize->add_option("package", opt_pkg, "Package path or stored model id")->required();
    auto* o_preset = optimize->add_option("--preset", preset_name, "Model-wide preset id");
    auto* o_sel = optimize->add_option("--selection", opt_selection, "Selection JSON");
    auto* o_budget = optimize->add_option("--budget-ms", budget_ms, "Latency budget in ms");
    o_preset->excludes(o_sel)->excludes(o_budget);
    o_sel->excludes(o_budget);
    optimize->add_option("--emit", emit_path, "Write the resulting selection here");
    optimize->add_option("--profile", profile_path, "Hardware profile JSON");
    optimize->add_option("--data-dir", data_dir, "Workspace root");
    std::string opt_format = "table";
    optimize->add_option("--format", opt_format, "table or json")->check(CLI::IsMember({"table", "json"}));

    // diff
    auto* diff_cmd = app.add_subcommand("diff", "Compare two model versions");
    std::string diff_a, diff_b, diff_format = "table";
    diff_cmd->add_option("base", diff_a, "Base package or model id")->required();
    diff_cmd->add_option("target", diff_b, "Target package or model id")->required();
    diff_cmd->add_option("--profile", profile_path, "Hardware profile JSON");
    diff_cmd->add_option("--data-dir", data_dir, "Workspace root");
    diff_cmd->add_option("--format", diff_format, "table or json")->check(CLI::IsMember({"table", "json"}));

    // serve
    auto* serve = app.add_subcommand("serve", "Run the HTTP API");
    int port = std::atoi(env_or("PORT", "8080").c_str());
    std::string host = "0.0.0.0";
    auto api_cfg = ApiConfig::from_env();
    std::string ui_dir;
    serve->add_option("--port", port, "Listen port");
    serve->add_option("--host", host, "Listen address");
    serve->add_option("--data-dir", data_dir, "Workspace root");
    serve->add_option("--profile", profile_path, "Hardware profile JSON");
    serve->add_option("--max-upload-mb", api_cfg.max_upload_mb, "Upload size limit");
    serve->add_option("--ui-dir", ui_dir, "Static UI assets to serve at /");

    // fixture
    auto* fixture = app.add_subcommand("fixture", "Generate a bundled or random package");
    std::string fixture_kind, out_path;
    int tasks = 200;
    std::uint64_t seed = 1;
    fixture->add_option("kind", fixture_kind, "unet, unet-plus or random")
        ->required()
        ->check(CLI::IsMember({"unet", "unet-plus", "random"}));
    fixture->add_option("--tasks", tasks, "Task count for random fixtures")->check(CLI::PositiveNumber);
    fixture->add_option("--seed", seed, "Seed for random fixtures");
    fixture->add_option("-o,--output", out_path, "Output directory, or a .tgz path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*ingest) {
            if (!fs::exists(ingest_pkg)) {
                throw Error(ErrorCode::NotFound, fmt::format("cannot read {}", ingest_pkg));
            }
            Workspace ws(data_dir);
            auto stored = ws.store_model(package_bytes(ingest_pkg), user);
            std::cout << stored.record.model_id << "\n" << share_url(stored.record) << "\n";
            if (stored.duplicate) std::cerr << "already stored; returning the existing model\n";
            return kExitOk;
        }

        if (*report_cmd) {
            const auto pkg = open_model(report_ref, data_dir);
            const auto profile = profile_for(profile_path);
            std::optional<OptimizationSelection> sel;
            if (!selection_path.empty()) sel = read_selection(selection_path);
            const auto sim = simulate(pkg.graph, sel.value_or(OptimizationSelection{}), profile);
            const auto payload = report::metrics_payload(pkg.graph, sim, sel.has_value());
            report::TableOptions opts;
            if (!sort_col.empty()) opts.sort = sort_col;
            if (top > 0) opts.top = top;
            if (format == "json") std::cout << report::select_rows(payload, opts).dump(2) << "\n";
            else if (format == "csv") std::cout << report::render_csv(payload, opts);
            else std::cout << report::render_table(payload, opts);
            return kExitOk;
        }

        if (*optimize) {
            const auto pkg = open_model(opt_pkg, data_dir);
            const auto profile = profile_for(profile_path);
            OptimizationSelection sel;
            bool infeasible = false;
            if (*o_preset) {
                auto p = parse_preset(preset_name);
                if (!p) {
                    std::string ids;
                    for (auto x : kAllPresets) ids += (ids.empty() ? "" : ", ") + std::string(preset_id(x));
                    throw Error(ErrorCode::Usage, fmt::format("unknown preset '{}'; valid presets: {}", preset_name, ids));
                }
                sel.preset = p;
            } else if (*o_sel) {
                sel = read_selection(opt_selection);
            } else if (*o_budget) {
                if (!(budget_ms > 0)) throw Error(ErrorCode::Usage, "--budget-ms must be positive");
                auto plan = plan_to_budget(pkg.graph, profile, budget_ms);
                sel = plan.selection;
                infeasible = plan.status == PlanStatus::infeasible;
            } else {
                throw Error(ErrorCode::Usage, "one of --preset, --selection or --budget-ms is required");
            }
            const auto sim = simulate(pkg.graph, sel, profile);
            if (!emit_path.empty()) write_text(emit_path, selection_to_json(sel).dump(2) + "\n");
            if (opt_format == "json") {
                json out = report::summary_payload(pkg.graph, sim);
                out["selection"] = selection_to_json(sel);
                out["status"] = infeasible ? "infeasible" : "ok";
                if (*o_budget) out["budget_ms"] = budget_ms;
                std::cout << out.dump(2) << "\n";
            } else {
                const auto& b = sim.summary_base;
                const auto& o = sim.summary_opt;
                std::cout << fmt::format("latency       {:.4f} ms -> {:.4f} ms ({})\n", b.total_latency,
                                         o.total_latency, pct(sim.delta_latency_pct));
                std::cout << fmt::format("memory power  {:.2f} mW -> {:.2f} mW ({})\n", b.memory_power,
                                         o.memory_power, pct(sim.delta_power_pct));
                std::cout << fmt::format("weights       {} B -> {} B\n", b.total_weight_bytes, o.total_weight_bytes);
                std::cout << fmt::format("tasks changed {}\n", std::count_if(sim.per_task.begin(), sim.per_task.end(),
                                                                            [](const auto& t) { return t.changed; }));
                if (*o_budget) {
                    std::cout << fmt::format("plan          {} targeted task(s) for a {:.4f} ms budget\n",
                                             sel.targeted.size(), budget_ms);
                }
            }
            if (infeasible) {
                std::cerr << fmt::format("infeasible: no plan reaches {:.4f} ms (best {:.4f} ms)\n", budget_ms,
                                         sim.summary_opt.total_latency);
                return kExitInfeasible;
            }
            return kExitOk;
        }

        if (*diff_cmd) {
            const auto a = open_model(diff_a, data_dir);
            const auto b = open_model(diff_b, data_dir);
            const auto d = diff_models(a.graph, {}, b.graph, {}, profile_for(profile_path));
            if (diff_format == "json") {
                std::cout << diff_to_json(d).dump(2) << "\n";
                return kExitOk;
            }
            const auto changed = std::count_if(d.matched.begin(), d.matched.end(), [](const auto& m) { return m.changed; });
            std::cout << fmt::format("{} added, {} removed, {} changed, {} matched\n", d.added.size(),
                                     d.removed.size(), changed, d.matched.size());
            for (auto id : d.added) std::cout << fmt::format("+ {:>5}  {}\n", id, b.graph.tasks[static_cast<std::size_t>(id)].name);
            for (auto id : d.removed) std::cout << fmt::format("- {:>5}  {}\n", id, a.graph.tasks[static_cast<std::size_t>(id)].name);
            std::cout << fmt::format("latency {:.4f} ms -> {:.4f} ms, memory power {:.2f} mW -> {:.2f} mW\n",
                                     d.summary_base.total_latency, d.summary_target.total_latency,
                                     d.summary_base.memory_power, d.summary_target.memory_power);
            return kExitOk;
        }

        if (*serve) {
            api_cfg.data_dir = data_dir;
            if (!profile_path.empty()) api_cfg.profile_path = fs::path(profile_path);
            if (!ui_dir.empty()) api_cfg.ui_dir = fs::path(ui_dir);
            ApiServer server(api_cfg);
            std::cerr << fmt::format("listening on {}:{}\n", host, port);
            return server.listen(host, port) ? kExitOk : kExitIo;
        }

        if (*fixture) {
            ModelPackage pkg;
            if (fixture_kind == "unet") pkg = fixtures::unet();
            else if (fixture_kind == "unet-plus") pkg = fixtures::unet_plus();
            else pkg = fixtures::random_package({.tasks = tasks, .seed = seed});
            const fs::path out(out_path);
            const auto name = out.filename().string();
            if (name.ends_with(".tgz") || name.ends_with(".tar.gz")) {
                if (out.has_parent_path()) fs::create_directories(out.parent_path());
                write_text(out, archive::write_tgz(pkg.members));
            } else {
                fs::create_directories(out);
                write_package_dir(pkg.members, out);
            }
            std::cout << fmt::format("{}: {} tasks -> {}\n", pkg.graph.name, pkg.graph.tasks.size(), out.string());
            return kExitOk;
        }
    } catch (const Error& e) {
        std::cerr << fmt::format("error [{}]: {}\n", error_code_name(e.code()), e.what());
        if (!e.detail().is_null()) std::cerr << e.detail().dump(2) << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    }
    return kExitUsage;
}
