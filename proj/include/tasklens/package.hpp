#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "tasklens/archive.hpp"
#include "tasklens/codemap.hpp"
#include "tasklens/model_ir.hpp"

namespace tasklens {

struct Manifest {
    std::string name;
    std::string created_at;
    nlohmann::json attributes = nlohmann::json::object();

    [[nodiscard]] std::int64_t pool_window() const;
};

struct ModelPackage {
    Manifest manifest;
    ModelGraph graph;
    CodeMap code_map;
    SourceTree sources;
    archive::Members members;  // raw bytes exactly as read
};

// Accepts a directory or a .tgz file.
ModelPackage parse_package(const std::filesystem::path& path);
ModelPackage parse_package_bytes(std::string_view tgz_bytes);
ModelPackage parse_package_members(archive::Members members);

nlohmann::json manifest_to_json(const Manifest& m);

// Serializes a package back into its member files.
archive::Members package_members(const ModelPackage& pkg);

void write_package_dir(const archive::Members& members, const std::filesystem::path& dir);
archive::Members read_package_dir(const std::filesystem::path& dir);

}  // namespace tasklens
