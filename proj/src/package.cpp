#include "tasklens/package.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "tasklens/error.hpp"

namespace tasklens {

namespace fs = std::filesystem;
using nlohmann::json;

std::int64_t Manifest::pool_window() const {
    auto it = attributes.find("pool_window");
    if (it != attributes.end() && it->is_number_integer()) return it->get<std::int64_t>();
    return 4;
}

json manifest_to_json(const Manifest& m) {
    return json{{"name", m.name}, {"created_at", m.created_at}, {"attributes", m.attributes}};
}

namespace {

json parse_member(const archive::Members& members, const std::string& name) {
    auto it = members.find(name);
    if (it == members.end()) {
        throw Error(ErrorCode::MissingMember, fmt::format("package is missing {}", name), json{{"member", name}});
    }
    try {
        return json::parse(it->second);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::SchemaError, fmt::format("{}: invalid JSON ({})", name, e.what()),
                    json{{"member", name}, {"pointer", "/"}, {"byte", e.byte}});
    }
}

Manifest manifest_from_json(const json& doc) {
    auto fail = [](const std::string& ptr, const std::string& what) -> Manifest {
        throw Error(ErrorCode::SchemaError, fmt::format("manifest.json: {} at {}", what, ptr),
                    json{{"member", "manifest.json"}, {"pointer", ptr}});
    };
    if (!doc.is_object()) return fail("/", "expected object");
    Manifest m;
    if (!doc.contains("name") || !doc["name"].is_string()) return fail("/name", "expected string");
    if (!doc.contains("created_at") || !doc["created_at"].is_string()) return fail("/created_at", "expected string");
    m.name = doc["name"].get<std::string>();
    m.created_at = doc["created_at"].get<std::string>();
    if (auto it = doc.find("attributes"); it != doc.end()) {
        if (!it->is_object()) return fail("/attributes", "expected object");
        m.attributes = *it;
        if (auto pw = it->find("pool_window"); pw != it->end() && !pw->is_null() &&
                                                (!pw->is_number_integer() || pw->get<std::int64_t>() < 1)) {
            return fail("/attributes/pool_window", "expected positive integer");
        }
    }
    return m;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, fmt::format("cannot read {}", path.string()), json{{"path", path.string()}});
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

ModelPackage parse_package_members(archive::Members members) {
    ModelPackage pkg;
    pkg.manifest = manifest_from_json(parse_member(members, "manifest.json"));

    const json graph_doc = parse_member(members, "graph.json");
    ModelGraph g;
    try {
        g = graph_from_json(graph_doc);
    } catch (Error& e) {
        auto detail = e.detail();
        detail["member"] = "graph.json";
        throw Error(e.code(), "graph.json: " + std::string(e.what()), detail);
    }
    auto violations = validate_graph(g);
    if (!violations.empty()) {
        json list = json::array();
        std::string msg = "graph.json failed validation:";
        for (const auto& v : violations) {
            json e{{"kind", to_string(v.kind)}, {"message", v.message}};
            if (v.task) e["task"] = *v.task;
            if (!v.tensor.empty()) e["tensor"] = v.tensor;
            if (!v.cycle.empty()) e["cycle"] = v.cycle;
            list.push_back(std::move(e));
            msg += " " + v.message + ";";
        }
        throw Error(ErrorCode::ValidationError, msg, json{{"member", "graph.json"}, {"violations", list}});
    }
    std::sort(g.tasks.begin(), g.tasks.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    g = derive_task_work(std::move(g), WorkDerivation{pkg.manifest.pool_window()});
    pkg.graph = std::move(g);

    if (members.contains("code_map.json")) {
        pkg.code_map = code_map_from_json(parse_member(members, "code_map.json"));
    }
    for (const auto& [name, data] : members) {
        if (!name.starts_with("src/")) continue;
        pkg.sources[normalize_source_path(std::string_view(name).substr(4))] = data;
    }
    pkg.members = std::move(members);
    return pkg;
}

ModelPackage parse_package_bytes(std::string_view tgz_bytes) {
    return parse_package_members(archive::read_tgz(tgz_bytes));
}

ModelPackage parse_package(const fs::path& path) {
    std::error_code ec;
    if (fs::is_directory(path, ec)) return parse_package_members(read_package_dir(path));
    if (!fs::exists(path, ec)) {
        throw Error(ErrorCode::Io, fmt::format("no such package: {}", path.string()), json{{"path", path.string()}});
    }
    return parse_package_bytes(read_file(path));
}

archive::Members read_package_dir(const fs::path& dir) {
    archive::Members out;
    std::error_code ec;
    fs::recursive_directory_iterator it(dir, ec);
    if (ec) throw Error(ErrorCode::Io, fmt::format("cannot list {}", dir.string()), json{{"path", dir.string()}});
    for (const auto& entry : it) {
        if (!entry.is_regular_file()) continue;
        auto rel = fs::relative(entry.path(), dir).generic_string();
        out[rel] = read_file(entry.path());
    }
    return out;
}

void write_package_dir(const archive::Members& members, const fs::path& dir) {
    for (const auto& [name, data] : members) {
        auto path = dir / normalize_source_path(name);
        fs::create_directories(path.parent_path());
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::Io, fmt::format("cannot write {}", path.string()));
        out.write(data.data(), static_cast<std::streamsize>(data.size()));
    }
}

archive::Members package_members(const ModelPackage& pkg) {
    archive::Members out;
    out["manifest.json"] = manifest_to_json(pkg.manifest).dump(2) + "\n";
    out["graph.json"] = graph_to_json(pkg.graph, true).dump(2) + "\n";
    if (!pkg.code_map.empty()) out["code_map.json"] = code_map_text(pkg.code_map);
    for (const auto& [name, text] : pkg.sources) out["src/" + name] = text;
    return out;
}

}  // namespace tasklens
