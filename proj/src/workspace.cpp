#include "tasklens/workspace.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/rand.h>

#include "tasklens/error.hpp"

namespace tasklens {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kRecordFile = "record.json";
constexpr std::string_view kStagingPrefix = ".staging-";
constexpr std::string_view kTempMarker = ".tmp-";

void random_bytes(unsigned char* out, std::size_t n) {
    if (RAND_bytes(out, static_cast<int>(n)) != 1) throw Error(ErrorCode::Io, "random source unavailable");
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, fmt::format("cannot read {}", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void fsync_dir(const fs::path& dir) {
    int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
    if (fd < 0) return;
    ::fsync(fd);
    ::close(fd);
}

bool is_temp_name(const std::string& name) {
    return name.starts_with(kStagingPrefix) || name.find(kTempMarker) != std::string::npos;
}

std::string document_text(const json& doc) { return doc.dump(2) + "\n"; }

}  // namespace

json record_to_json(const ModelRecord& r) {
    return json{{"model_id", r.model_id},
                {"name", r.name},
                {"owner", r.owner},
                {"created_at", r.created_at},
                {"graph_hash", r.graph_hash},
                {"shared_with", r.shared_with},
                {"link_sharing", r.link_sharing},
                {"share_token", r.share_token},
                {"task_count", r.task_count}};
}

ModelRecord record_from_json(const json& doc) {
    try {
        ModelRecord r;
        r.model_id = doc.at("model_id").get<std::string>();
        r.name = doc.at("name").get<std::string>();
        r.owner = doc.at("owner").get<std::string>();
        r.created_at = doc.at("created_at").get<std::string>();
        r.graph_hash = doc.at("graph_hash").get<std::string>();
        r.shared_with = doc.at("shared_with").get<std::set<std::string>>();
        r.link_sharing = doc.at("link_sharing").get<bool>();
        r.share_token = doc.at("share_token").get<std::string>();
        r.task_count = doc.at("task_count").get<std::uint64_t>();
        return r;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaError, fmt::format("bad model record: {}", e.what()));
    }
}

json analysis_to_json(const Analysis& a) {
    json out{{"analysis_id", a.analysis_id}, {"model_id", a.model_id},
             {"name", a.name},               {"author", a.author},
             {"created_at", a.created_at},   {"selection", selection_to_json(a.selection)}};
    out["parent_analysis_id"] = a.parent_analysis_id ? json(*a.parent_analysis_id) : json(nullptr);
    return out;
}

Analysis analysis_from_json(const json& doc) {
    try {
        Analysis a;
        a.analysis_id = doc.at("analysis_id").get<std::string>();
        a.model_id = doc.at("model_id").get<std::string>();
        a.name = doc.at("name").get<std::string>();
        a.author = doc.at("author").get<std::string>();
        a.created_at = doc.at("created_at").get<std::string>();
        if (doc.contains("parent_analysis_id") && !doc["parent_analysis_id"].is_null()) {
            a.parent_analysis_id = doc["parent_analysis_id"].get<std::string>();
        }
        a.selection = selection_from_json(doc.at("selection"));
        return a;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaError, fmt::format("bad analysis: {}", e.what()));
    }
}

std::string make_sortable_id() {
    static constexpr char kCrockford[] = "0123456789ABCDEFGHJKMNPQRSTVWXYZ";
    static std::mutex mu;
    static std::uint64_t last_ms = 0;
    static std::array<unsigned char, 10> last_rand{};

    const auto now = static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
            .count());
    std::array<unsigned char, 10> rnd{};
    std::uint64_t ms = 0;
    {
        std::lock_guard lock(mu);
        if (now <= last_ms) {
            // Same millisecond (or clock step back): bump the random part so ids stay ordered.
            ms = last_ms;
            rnd = last_rand;
            for (int i = 9; i >= 0; --i) {
                if (++rnd[static_cast<std::size_t>(i)] != 0) break;
            }
        } else {
            ms = now;
            random_bytes(rnd.data(), rnd.size());
        }
        last_ms = ms;
        last_rand = rnd;
    }

    std::string out(26, '0');
    for (int i = 9; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = kCrockford[ms & 31u];
        ms >>= 5;
    }
    // 80 random bits -> 16 base32 chars
    unsigned __int128 bits = 0;
    for (auto b : rnd) bits = (bits << 8) | b;
    for (int i = 25; i >= 10; --i) {
        out[static_cast<std::size_t>(i)] = kCrockford[static_cast<unsigned>(bits & 31u)];
        bits >>= 5;
    }
    return out;
}

std::string make_share_token() {
    static constexpr char kAlphabet[] = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz";
    std::string out;
    out.reserve(22);
    while (out.size() < 22) {
        unsigned char buf[32];
        random_bytes(buf, sizeof buf);
        for (unsigned char b : buf) {
            if (b >= 248) continue;  // 248 = 4 * 62, keeps the draw unbiased
            out.push_back(kAlphabet[b % 62]);
            if (out.size() == 22) break;
        }
    }
    return out;
}

bool constant_time_equals(std::string_view a, std::string_view b) {
    if (a.size() != b.size()) return false;
    return CRYPTO_memcmp(a.data(), b.data(), a.size()) == 0;
}

std::string utc_now_rfc3339() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

Access check_access(const ModelRecord& record, std::string_view user, std::optional<std::string_view> token) {
    if (!user.empty() && user == record.owner) return Access::allow;
    if (!user.empty() && record.shared_with.contains(std::string(user))) return Access::allow;
    if (record.link_sharing && token && !record.share_token.empty() &&
        constant_time_equals(*token, record.share_token)) {
        return Access::allow;
    }
    return Access::deny;
}

std::string share_url(const ModelRecord& record, std::optional<std::string_view> analysis_id) {
    std::string url = "/m/" + record.model_id;
    char sep = '?';
    if (analysis_id) {
        url += fmt::format("{}analysis={}", sep, *analysis_id);
        sep = '&';
    }
    if (record.link_sharing) url += fmt::format("{}t={}", sep, record.share_token);
    return url;
}

void atomic_write_file(const fs::path& path, std::string_view bytes, const std::optional<FaultPlan>& fault) {
    unsigned char salt[6];
    random_bytes(salt, sizeof salt);
    std::string suffix;
    for (unsigned char c : salt) suffix += fmt::format("{:02x}", c);
    const fs::path tmp = path.parent_path() / (path.filename().string() + std::string(kTempMarker) + suffix);

    int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (fd < 0) throw Error(ErrorCode::Io, fmt::format("cannot create {}", tmp.string()));

    std::size_t limit = bytes.size();
    const bool crash = fault && fault->crash_after_bytes < bytes.size();
    if (crash) limit = fault->crash_after_bytes;

    std::size_t done = 0;
    while (done < limit) {
        auto n = ::write(fd, bytes.data() + done, limit - done);
        if (n < 0) {
            ::close(fd);
            ::unlink(tmp.c_str());
            throw Error(ErrorCode::Io, fmt::format("write failed for {}", tmp.string()));
        }
        done += static_cast<std::size_t>(n);
    }
    if (crash) {
        ::close(fd);
        throw SimulatedCrash();
    }
    if (::fsync(fd) != 0 || ::close(fd) != 0) {
        ::unlink(tmp.c_str());
        throw Error(ErrorCode::Io, fmt::format("fsync failed for {}", tmp.string()));
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw Error(ErrorCode::Io, fmt::format("cannot rename into {}", path.string()));
    }
    fsync_dir(path.parent_path());
}

Workspace::Workspace(fs::path root, WorkspaceOptions options) : root_(std::move(root)), options_(options) {
    std::error_code ec;
    fs::create_directories(root_ / "models", ec);
    fs::create_directories(root_ / "analyses", ec);
    if (ec) throw Error(ErrorCode::Io, fmt::format("cannot create data root {}", root_.string()));
    load_index();
}

void Workspace::load_index() {
    // Leftovers of interrupted writes are never valid records; drop them.
    for (const auto& dir : {root_ / "models", root_ / "analyses"}) {
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (is_temp_name(entry.path().filename().string())) fs::remove_all(entry.path());
        }
    }
    for (const auto& entry : fs::directory_iterator(root_ / "models")) {
        if (!entry.is_directory()) continue;
        for (const auto& inner : fs::directory_iterator(entry.path())) {
            if (is_temp_name(inner.path().filename().string())) fs::remove(inner.path());
        }
        const auto record_path = entry.path() / kRecordFile;
        if (!fs::exists(record_path)) continue;
        auto record = record_from_json(json::parse(read_file(record_path)));
        models_[record.model_id] = std::move(record);
    }
    for (const auto& entry : fs::directory_iterator(root_ / "analyses")) {
        if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
        auto a = analysis_from_json(json::parse(read_file(entry.path())));
        analyses_[a.analysis_id] = std::move(a);
    }
}

void Workspace::ensure_space(std::uint64_t needed) const {
    std::error_code ec;
    const auto info = fs::space(root_, ec);
    if (ec) return;
    if (info.available < needed + options_.min_free_bytes) {
        throw Error(ErrorCode::StorageFull, "not enough free space in the data directory",
                    json{{"available", info.available}, {"needed", needed + options_.min_free_bytes}});
    }
}

StoreResult Workspace::store_model(std::string_view package_bytes, const std::string& owner) {
    if (owner.empty()) throw Error(ErrorCode::AccessDenied, "an owner is required to store a model");
    ModelPackage pkg = parse_package_bytes(package_bytes);
    const auto hash = graph_hash(pkg.graph);

    std::unique_lock lock(mutex_);
    for (const auto& [id, rec] : models_) {
        if (rec.owner == owner && rec.graph_hash == hash) return {rec, true};
    }

    std::uint64_t total = 0;
    for (const auto& [name, data] : pkg.members) total += data.size();
    ensure_space(total + 4096);

    ModelRecord rec;
    rec.model_id = make_sortable_id();
    rec.name = pkg.manifest.name.empty() ? pkg.graph.name : pkg.manifest.name;
    rec.owner = owner;
    rec.created_at = utc_now_rfc3339();
    rec.graph_hash = hash;
    rec.share_token = make_share_token();
    rec.task_count = pkg.graph.tasks.size();

    auto members = pkg.members;
    members.erase(std::string(kRecordFile));

    const fs::path staging = root_ / "models" / (std::string(kStagingPrefix) + rec.model_id);
    const fs::path final_dir = root_ / "models" / rec.model_id;
    try {
        fs::create_directories(staging);
        write_package_dir(members, staging);
        atomic_write_file(staging / kRecordFile, document_text(record_to_json(rec)), options_.fault);
        fs::rename(staging, final_dir);
        fsync_dir(root_ / "models");
    } catch (...) {
        std::error_code ec;
        // A simulated crash leaves the debris in place, exactly like a killed process.
        if (!options_.fault) fs::remove_all(staging, ec);
        throw;
    }
    models_[rec.model_id] = rec;
    return {rec, false};
}

std::optional<ModelRecord> Workspace::find_model(std::string_view model_id) const {
    std::shared_lock lock(mutex_);
    auto it = models_.find(model_id);
    if (it == models_.end()) return std::nullopt;
    return it->second;
}

ModelRecord Workspace::require_model(std::string_view model_id) const {
    auto it = models_.find(model_id);
    if (it == models_.end()) {
        throw Error(ErrorCode::UnknownModel, fmt::format("unknown model {}", model_id),
                    json{{"model_id", std::string(model_id)}});
    }
    return it->second;
}

std::vector<ModelRecord> Workspace::list_models(std::string_view user) const {
    std::shared_lock lock(mutex_);
    std::vector<ModelRecord> out;
    for (const auto& [id, rec] : models_) {
        if (check_access(rec, user) == Access::allow) out.push_back(rec);
    }
    return out;
}

std::shared_ptr<const ModelPackage> Workspace::load_package(std::string_view model_id) const {
    {
        std::lock_guard lock(cache_mutex_);
        auto it = package_cache_.find(model_id);
        if (it != package_cache_.end()) return it->second;
    }
    fs::path dir;
    {
        std::shared_lock lock(mutex_);
        require_model(model_id);
        dir = root_ / "models" / std::string(model_id);
    }
    auto members = read_package_dir(dir);
    members.erase(std::string(kRecordFile));
    auto pkg = std::make_shared<const ModelPackage>(parse_package_members(std::move(members)));
    std::lock_guard lock(cache_mutex_);
    auto [it, inserted] = package_cache_.emplace(std::string(model_id), pkg);
    return it->second;
}

ModelRecord Workspace::update_sharing(std::string_view model_id, std::string_view user,
                                      const std::optional<std::vector<std::string>>& users,
                                      std::optional<bool> link_sharing) {
    std::unique_lock lock(mutex_);
    ModelRecord rec = require_model(model_id);
    if (rec.owner != user) {
        throw Error(ErrorCode::AccessDenied, "only the owner can change sharing",
                    json{{"model_id", rec.model_id}});
    }
    if (users) rec.shared_with = std::set<std::string>(users->begin(), users->end());
    if (link_sharing) {
        if (*link_sharing && !rec.link_sharing) rec.share_token = make_share_token();
        rec.link_sharing = *link_sharing;
    }
    atomic_write_file(root_ / "models" / rec.model_id / kRecordFile, document_text(record_to_json(rec)),
                      options_.fault);
    models_[rec.model_id] = rec;
    return rec;
}

Analysis Workspace::save_analysis(std::string_view model_id, const std::string& name,
                                  const OptimizationSelection& selection, const std::string& author,
                                  std::optional<std::string_view> token) {
    const auto pkg = load_package(model_id);
    for (const auto& o : selection.targeted) {
        if (o.task < 0 || static_cast<std::size_t>(o.task) >= pkg->graph.tasks.size()) {
            throw Error(ErrorCode::UnknownTask, fmt::format("selection references unknown task {}", o.task),
                        json{{"task", o.task}});
        }
    }
    std::unique_lock lock(mutex_);
    const auto rec = require_model(model_id);
    if (check_access(rec, author, token) == Access::deny) {
        throw Error(ErrorCode::AccessDenied, "model is not shared with this user", json{{"model_id", rec.model_id}});
    }
    Analysis a;
    a.analysis_id = make_sortable_id();
    a.model_id = rec.model_id;
    a.name = name;
    a.author = author;
    a.created_at = utc_now_rfc3339();
    a.selection = selection;
    ensure_space(4096);
    atomic_write_file(root_ / "analyses" / (a.analysis_id + ".json"), document_text(analysis_to_json(a)),
                      options_.fault);
    analyses_[a.analysis_id] = a;
    return a;
}

Analysis Workspace::fork_analysis(std::string_view analysis_id, const std::string& author,
                                  std::optional<std::string_view> token) {
    std::unique_lock lock(mutex_);
    auto it = analyses_.find(analysis_id);
    if (it == analyses_.end()) {
        throw Error(ErrorCode::UnknownAnalysis, fmt::format("unknown analysis {}", analysis_id),
                    json{{"analysis_id", std::string(analysis_id)}});
    }
    const Analysis& parent = it->second;
    const auto rec = require_model(parent.model_id);
    if (check_access(rec, author, token) == Access::deny) {
        throw Error(ErrorCode::AccessDenied, "model is not shared with this user", json{{"model_id", rec.model_id}});
    }
    Analysis a = parent;
    a.analysis_id = make_sortable_id();
    a.author = author;
    a.created_at = utc_now_rfc3339();
    a.parent_analysis_id = parent.analysis_id;
    ensure_space(4096);
    atomic_write_file(root_ / "analyses" / (a.analysis_id + ".json"), document_text(analysis_to_json(a)),
                      options_.fault);
    analyses_[a.analysis_id] = a;
    return a;
}

std::optional<Analysis> Workspace::find_analysis(std::string_view analysis_id) const {
    std::shared_lock lock(mutex_);
    auto it = analyses_.find(analysis_id);
    if (it == analyses_.end()) return std::nullopt;
    return it->second;
}

std::vector<Analysis> Workspace::list_analyses(std::string_view model_id) const {
    std::shared_lock lock(mutex_);
    std::vector<Analysis> out;
    for (const auto& [id, a] : analyses_) {
        if (a.model_id == model_id) out.push_back(a);
    }
    return out;
}

std::string Workspace::state_hash() const {
    std::shared_lock lock(mutex_);
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(root_)) {
        if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::string acc;
    for (const auto& f : files) {
        acc += fs::relative(f, root_).generic_string();
        acc.push_back('\0');
        acc += sha256_hex(read_file(f));
        acc.push_back('\n');
    }
    return sha256_hex(acc);
}

}  // namespace tasklens
