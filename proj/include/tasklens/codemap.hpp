#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tasklens/model_ir.hpp"

namespace tasklens {

inline constexpr std::size_t kMaxSnippetChars = 400;
inline constexpr std::size_t kMaxWholeSourceBytes = 2u * 1024u * 1024u;

struct CodeLocation {
    std::string file;  // relative to the package src/ directory
    int line = 1;
    std::string snippet;

    friend bool operator==(const CodeLocation&, const CodeLocation&) = default;
};

struct CodeMap {
    std::vector<CodeLocation> locations;
    // task id -> location indices, innermost call first
    std::map<TaskId, std::vector<std::size_t>> task_map;

    [[nodiscard]] bool empty() const noexcept { return locations.empty() && task_map.empty(); }
};

CodeMap code_map_from_json(const nlohmann::json& doc);
nlohmann::json code_map_to_json(const CodeMap& cm);
std::string code_map_text(const CodeMap& cm);

std::vector<CodeLocation> locations_for_task(const CodeMap& cm, TaskId task);

// Source files keyed by normalized path relative to src/.
using SourceTree = std::map<std::string, std::string>;

// Collapses "." segments and duplicate slashes. Throws PathRejected for
// absolute paths, ".." segments, backslashes, NUL bytes and empty paths.
std::string normalize_source_path(std::string_view path);

struct SourceSlice {
    std::string file;
    int start_line = 1;  // 1-based, inclusive
    int end_line = 0;
    int total_lines = 0;
    std::string text;
};

using LineWindow = std::pair<int, int>;

SourceSlice read_source(const SourceTree& tree, std::string_view file,
                        std::optional<LineWindow> window = std::nullopt);

}  // namespace tasklens
