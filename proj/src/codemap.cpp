#include "tasklens/codemap.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "tasklens/error.hpp"

namespace tasklens {

using nlohmann::json;

namespace {

[[noreturn]] void schema_fail(const std::string& pointer, const std::string& what) {
    throw Error(ErrorCode::SchemaError, fmt::format("code_map.json: {} at {}", what, pointer),
                json{{"member", "code_map.json"}, {"pointer", pointer}});
}

}  // namespace

CodeMap code_map_from_json(const json& doc) {
    if (!doc.is_object()) schema_fail("/", "expected object");
    CodeMap cm;
    auto locs = doc.find("locations");
    if (locs == doc.end() || !locs->is_array()) schema_fail("/locations", "expected array");
    for (std::size_t i = 0; i < locs->size(); ++i) {
        const auto& e = (*locs)[i];
        const auto ptr = fmt::format("/locations/{}", i);
        if (!e.is_object()) schema_fail(ptr, "expected object");
        if (!e.contains("file") || !e["file"].is_string()) schema_fail(ptr + "/file", "expected string");
        if (!e.contains("line") || !e["line"].is_number_integer() || e["line"].get<std::int64_t>() < 1) {
            schema_fail(ptr + "/line", "expected positive integer");
        }
        CodeLocation loc;
        try {
            loc.file = normalize_source_path(e["file"].get<std::string>());
        } catch (const Error&) {
            schema_fail(ptr + "/file", "path escapes src/");
        }
        loc.line = e["line"].get<int>();
        if (auto s = e.find("snippet"); s != e.end()) {
            if (!s->is_string()) schema_fail(ptr + "/snippet", "expected string");
            loc.snippet = s->get<std::string>();
            if (loc.snippet.size() > kMaxSnippetChars) schema_fail(ptr + "/snippet", "snippet longer than 400 chars");
        }
        cm.locations.push_back(std::move(loc));
    }
    auto tm = doc.find("task_map");
    if (tm == doc.end() || !tm->is_object()) schema_fail("/task_map", "expected object");
    for (const auto& [key, list] : tm->items()) {
        const auto ptr = "/task_map/" + key;
        TaskId id = 0;
        try {
            std::size_t used = 0;
            id = std::stoi(key, &used);
            if (used != key.size() || id < 0) throw std::invalid_argument(key);
        } catch (const std::exception&) {
            schema_fail(ptr, "task key must be a non-negative integer");
        }
        if (!list.is_array()) schema_fail(ptr, "expected array");
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < list.size(); ++i) {
            if (!list[i].is_number_unsigned() || list[i].get<std::size_t>() >= cm.locations.size()) {
                schema_fail(fmt::format("{}/{}", ptr, i), "location index out of range");
            }
            idx.push_back(list[i].get<std::size_t>());
        }
        cm.task_map[id] = std::move(idx);
    }
    return cm;
}

json code_map_to_json(const CodeMap& cm) {
    json locs = json::array();
    for (const auto& l : cm.locations) {
        locs.push_back(json{{"file", l.file}, {"line", l.line}, {"snippet", l.snippet}});
    }
    json tm = json::object();
    for (const auto& [id, idx] : cm.task_map) tm[std::to_string(id)] = idx;
    return json{{"locations", std::move(locs)}, {"task_map", std::move(tm)}};
}

std::string code_map_text(const CodeMap& cm) { return code_map_to_json(cm).dump(2) + "\n"; }

std::vector<CodeLocation> locations_for_task(const CodeMap& cm, TaskId task) {
    std::vector<CodeLocation> out;
    auto it = cm.task_map.find(task);
    if (it == cm.task_map.end()) return out;
    for (auto i : it->second) out.push_back(cm.locations.at(i));
    return out;
}

std::string normalize_source_path(std::string_view path) {
    auto reject = [&](const char* why) -> std::string {
        throw Error(ErrorCode::PathRejected, fmt::format("rejected source path: {}", why),
                    json{{"file", std::string(path)}});
    };
    if (path.empty()) reject("empty");
    if (path.front() == '/') reject("absolute");
    if (path.find('\\') != std::string_view::npos) reject("backslash");
    if (path.find('\0') != std::string_view::npos) reject("NUL byte");
    if (path.size() >= 2 && path[1] == ':') reject("drive prefix");
    std::vector<std::string_view> parts;
    std::size_t pos = 0;
    while (pos <= path.size()) {
        auto slash = path.find('/', pos);
        auto part = path.substr(pos, slash == std::string_view::npos ? std::string_view::npos : slash - pos);
        if (part == "..") reject("parent segment");
        if (!part.empty() && part != ".") parts.push_back(part);
        if (slash == std::string_view::npos) break;
        pos = slash + 1;
    }
    if (parts.empty()) reject("empty");
    std::string out;
    for (auto p : parts) {
        if (!out.empty()) out += '/';
        out += p;
    }
    return out;
}

SourceSlice read_source(const SourceTree& tree, std::string_view file, std::optional<LineWindow> window) {
    const auto key = normalize_source_path(file);
    auto it = tree.find(key);
    if (it == tree.end()) {
        throw Error(ErrorCode::NotFound, fmt::format("source file not found: {}", key), json{{"file", key}});
    }
    const std::string& text = it->second;

    std::vector<std::size_t> starts{0};
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '\n' && i + 1 < text.size()) starts.push_back(i + 1);
    }
    const int total = text.empty() ? 0 : static_cast<int>(starts.size());

    SourceSlice out;
    out.file = key;
    out.total_lines = total;
    if (!window) {
        if (text.size() > kMaxWholeSourceBytes) {
            throw Error(ErrorCode::TooLarge, fmt::format("{} exceeds 2 MiB; request a line window", key),
                        json{{"file", key}, {"bytes", text.size()}});
        }
        out.start_line = total == 0 ? 0 : 1;
        out.end_line = total;
        out.text = text;
        return out;
    }
    int lo = std::max(1, window->first);
    int hi = std::min(total, window->second);
    if (total == 0 || lo > hi) {
        out.start_line = lo;
        out.end_line = lo - 1;
        return out;
    }
    auto begin = starts[static_cast<std::size_t>(lo - 1)];
    auto end = static_cast<std::size_t>(hi) < starts.size() ? starts[static_cast<std::size_t>(hi)] : text.size();
    out.start_line = lo;
    out.end_line = hi;
    out.text = text.substr(begin, end - begin);
    return out;
}

}  // namespace tasklens
