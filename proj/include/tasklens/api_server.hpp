#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "tasklens/cost_model.hpp"

namespace tasklens {

struct ApiConfig {
    std::filesystem::path data_dir = "data";
    std::optional<std::filesystem::path> profile_path;
    std::uint64_t max_upload_mb = 512;
    std::string cors_origin = "*";
    std::optional<std::filesystem::path> ui_dir;

    // PORT is read by the caller; DATA_DIR, PROFILE_PATH, MAX_UPLOAD_MB here.
    static ApiConfig from_env();
};

// HTTP/JSON service under /api. Handlers run on the server's thread pool.
class ApiServer {
public:
    explicit ApiServer(ApiConfig config);
    ~ApiServer();
    ApiServer(const ApiServer&) = delete;
    ApiServer& operator=(const ApiServer&) = delete;

    // Blocks until stop().
    bool listen(const std::string& host, int port);
    // Binds an ephemeral port and returns it; call listen_after_bind() to serve.
    int bind_any(const std::string& host);
    bool listen_after_bind();
    void stop();
    void wait_until_ready() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace tasklens
