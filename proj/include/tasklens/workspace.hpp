#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tasklens/optimizer.hpp"
#include "tasklens/package.hpp"

namespace tasklens {

struct ModelRecord {
    std::string model_id;
    std::string name;
    std::string owner;
    std::string created_at;
    std::string graph_hash;
    std::set<std::string> shared_with;
    bool link_sharing = false;
    std::string share_token;
    std::uint64_t task_count = 0;

    friend bool operator==(const ModelRecord&, const ModelRecord&) = default;
};

struct Analysis {
    std::string analysis_id;
    std::string model_id;
    std::string name;
    std::string author;
    std::string created_at;
    std::optional<std::string> parent_analysis_id;
    OptimizationSelection selection;
};

nlohmann::json record_to_json(const ModelRecord& r);
ModelRecord record_from_json(const nlohmann::json& doc);
nlohmann::json analysis_to_json(const Analysis& a);
Analysis analysis_from_json(const nlohmann::json& doc);

// 26-char Crockford base32: 48-bit millisecond timestamp + 80 random bits.
std::string make_sortable_id();
// 22-char base62 random token.
std::string make_share_token();
bool constant_time_equals(std::string_view a, std::string_view b);
std::string utc_now_rfc3339();

enum class Access { allow, deny };

Access check_access(const ModelRecord& record, std::string_view user,
                    std::optional<std::string_view> token = std::nullopt);

std::string share_url(const ModelRecord& record, std::optional<std::string_view> analysis_id = std::nullopt);

// Test hook: abort a file write after this many bytes, leaving the partial
// temp file behind exactly as a killed process would.
struct FaultPlan {
    std::size_t crash_after_bytes = 0;
};

class SimulatedCrash : public std::runtime_error {
public:
    SimulatedCrash() : std::runtime_error("simulated crash during write") {}
};

// Writes `bytes` to `path` via a temp file in the same directory, fsync and rename.
void atomic_write_file(const std::filesystem::path& path, std::string_view bytes,
                       const std::optional<FaultPlan>& fault = std::nullopt);

struct WorkspaceOptions {
    std::uint64_t min_free_bytes = 16u * 1024u * 1024u;
    std::optional<FaultPlan> fault;
};

struct StoreResult {
    ModelRecord record;
    bool duplicate = false;
};

// Filesystem-backed store of model packages and analyses:
//   {root}/models/{model_id}/{manifest.json,graph.json,code_map.json,src/...,record.json}
//   {root}/analyses/{analysis_id}.json
// Writes are serialized through one mutex; reads take a shared lock.
class Workspace {
public:
    explicit Workspace(std::filesystem::path root, WorkspaceOptions options = {});

    StoreResult store_model(std::string_view package_bytes, const std::string& owner);

    [[nodiscard]] std::optional<ModelRecord> find_model(std::string_view model_id) const;
    [[nodiscard]] std::vector<ModelRecord> list_models(std::string_view user) const;
    [[nodiscard]] std::shared_ptr<const ModelPackage> load_package(std::string_view model_id) const;

    ModelRecord update_sharing(std::string_view model_id, std::string_view user,
                               const std::optional<std::vector<std::string>>& users,
                               std::optional<bool> link_sharing);

    Analysis save_analysis(std::string_view model_id, const std::string& name,
                           const OptimizationSelection& selection, const std::string& author,
                           std::optional<std::string_view> token = std::nullopt);
    Analysis fork_analysis(std::string_view analysis_id, const std::string& author,
                           std::optional<std::string_view> token = std::nullopt);

    [[nodiscard]] std::optional<Analysis> find_analysis(std::string_view analysis_id) const;
    [[nodiscard]] std::vector<Analysis> list_analyses(std::string_view model_id) const;

    [[nodiscard]] const std::filesystem::path& root() const noexcept { return root_; }
    void set_fault(std::optional<FaultPlan> fault) { options_.fault = fault; }

    // SHA-256 over every file path and content under the root.
    [[nodiscard]] std::string state_hash() const;

private:
    void load_index();
    ModelRecord require_model(std::string_view model_id) const;
    void ensure_space(std::uint64_t needed) const;

    std::filesystem::path root_;
    WorkspaceOptions options_;
    mutable std::shared_mutex mutex_;
    std::map<std::string, ModelRecord, std::less<>> models_;
    std::map<std::string, Analysis, std::less<>> analyses_;
    mutable std::mutex cache_mutex_;
    mutable std::map<std::string, std::shared_ptr<const ModelPackage>, std::less<>> package_cache_;
};

}  // namespace tasklens
