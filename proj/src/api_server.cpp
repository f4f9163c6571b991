#include "tasklens/api_server.hpp"

#include <cstdlib>
#include <map>
#include <mutex>
#include <set>

#include <fmt/format.h>
#include <httplib.h>

#include "tasklens/codemap.hpp"
#include "tasklens/diff.hpp"
#include "tasklens/error.hpp"
#include "tasklens/layout.hpp"
#include "tasklens/optimizer.hpp"
#include "tasklens/report.hpp"
#include "tasklens/scheduler.hpp"
#include "tasklens/workspace.hpp"

namespace tasklens {

using nlohmann::json;

ApiConfig ApiConfig::from_env() {
    ApiConfig c;
    if (const char* v = std::getenv("DATA_DIR"); v && *v) c.data_dir = v;
    if (const char* v = std::getenv("PROFILE_PATH"); v && *v) c.profile_path = std::filesystem::path(v);
    if (const char* v = std::getenv("MAX_UPLOAD_MB"); v && *v) c.max_upload_mb = std::strtoull(v, nullptr, 10);
    if (const char* v = std::getenv("UI_DIR"); v && *v) c.ui_dir = std::filesystem::path(v);
    return c;
}

namespace {

// Failure raised inside a handler with an explicit status.
struct HttpError {
    int status;
    std::string code;
    std::string message;
    json detail;
};

int status_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::NotFound:
        case ErrorCode::UnknownModel:
        case ErrorCode::UnknownAnalysis: return 404;
        case ErrorCode::AccessDenied: return 403;
        case ErrorCode::TooLarge: return 413;
        case ErrorCode::StorageFull: return 507;
        case ErrorCode::Io: return 500;
        default: return 400;
    }
}

json error_body(int status, std::string_view code, std::string_view message, const json& detail) {
    json body{{"status", status}, {"code", code}, {"message", message}};
    if (!detail.is_null()) body["detail"] = detail;
    return body;
}

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    try {
        return json::parse(req.body);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::SchemaError, fmt::format("request body is not valid JSON: {}", e.what()));
    }
}

json group_to_json(const GroupNode& node) {
    json children = json::array();
    for (const auto& c : node.children) children.push_back(group_to_json(c));
    return json{{"name", node.name}, {"path", node.path}, {"members", node.members}, {"children", children}};
}

std::int64_t parse_int(const std::string& s, std::string_view what) {
    try {
        std::size_t used = 0;
        auto v = std::stoll(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorCode::Usage, fmt::format("{} must be an integer", what), json{{"value", s}});
    }
}

}  // namespace

struct ApiServer::Impl {
    struct ModelContext {
        std::shared_ptr<const ModelPackage> pkg;
        std::string hash;
        std::unique_ptr<Simulator> sim;
    };

    ApiConfig config;
    HardwareProfile profile;
    Workspace workspace;
    httplib::Server server;

    std::mutex cache_mutex;
    std::map<std::string, std::shared_ptr<ModelContext>> contexts;
    std::map<std::string, json> option_cache;
    std::map<std::string, json> layout_cache;

    explicit Impl(ApiConfig cfg)
        : config(std::move(cfg)),
          profile(config.profile_path ? load_profile(*config.profile_path) : default_profile()),
          workspace(config.data_dir) {
        routes();
    }

    static std::string user_of(const httplib::Request& req) { return req.get_header_value("X-User"); }

    static std::optional<std::string> token_of(const httplib::Request& req) {
        if (req.has_param("t")) return req.get_param_value("t");
        if (req.has_header("X-Share-Token")) return req.get_header_value("X-Share-Token");
        return std::nullopt;
    }

    // Models the caller cannot see are reported as missing, never as forbidden.
    ModelRecord visible_model(const httplib::Request& req, const std::string& id) {
        auto rec = workspace.find_model(id);
        const auto token = token_of(req);
        if (!rec || check_access(*rec, user_of(req), token ? std::optional<std::string_view>(*token)
                                                           : std::nullopt) == Access::deny) {
            throw Error(ErrorCode::UnknownModel, fmt::format("unknown model {}", id), json{{"model_id", id}});
        }
        return *rec;
    }

    std::shared_ptr<ModelContext> context(const std::string& id) {
        {
            std::lock_guard lock(cache_mutex);
            auto it = contexts.find(id);
            if (it != contexts.end()) return it->second;
        }
        auto ctx = std::make_shared<ModelContext>();
        ctx->pkg = workspace.load_package(id);
        ctx->hash = graph_hash(ctx->pkg->graph);
        ctx->sim = std::make_unique<Simulator>(ctx->pkg->graph, profile);
        std::lock_guard lock(cache_mutex);
        return contexts.emplace(id, ctx).first->second;
    }

    // Selection from ?analysis= or ?selection=; nullopt when neither is given.
    std::optional<OptimizationSelection> selection_param(const httplib::Request& req, const std::string& model_id,
                                                         const std::string& analysis_key = "analysis",
                                                         const std::string& selection_key = "selection") {
        if (req.has_param(analysis_key)) {
            const auto aid = req.get_param_value(analysis_key);
            auto a = workspace.find_analysis(aid);
            if (!a || a->model_id != model_id) {
                throw Error(ErrorCode::UnknownAnalysis, fmt::format("unknown analysis {}", aid),
                            json{{"analysis_id", aid}});
            }
            return a->selection;
        }
        if (req.has_param(selection_key)) {
            json doc;
            try {
                doc = json::parse(req.get_param_value(selection_key));
            } catch (const json::parse_error& e) {
                throw Error(ErrorCode::SchemaError, fmt::format("selection is not valid JSON: {}", e.what()));
            }
            return selection_from_json(doc);
        }
        return std::nullopt;
    }

    json record_view(const ModelRecord& rec, const std::string& user) const {
        json out = record_to_json(rec);
        if (rec.owner != user) out.erase("share_token");
        out["url"] = share_url(rec);
        return out;
    }

    TaskId task_param(const std::string& text, const ModelGraph& g) {
        const auto tid = parse_int(text, "task id");
        if (tid < 0 || static_cast<std::size_t>(tid) >= g.tasks.size()) {
            throw HttpError{404, "UnknownTask", fmt::format("unknown task {}", text), json{{"task", tid}}};
        }
        return static_cast<TaskId>(tid);
    }

    template <typename F>
    httplib::Server::Handler guarded(F&& fn, bool needs_user = true) {
        return [this, fn = std::forward<F>(fn), needs_user](const httplib::Request& req, httplib::Response& res) {
            try {
                if (needs_user && user_of(req).empty()) {
                    send_json(res, 401, error_body(401, "Unauthenticated", "missing X-User header", nullptr));
                    return;
                }
                fn(req, res);
            } catch (const HttpError& e) {
                send_json(res, e.status, error_body(e.status, e.code, e.message, e.detail));
            } catch (const Error& e) {
                const int status = status_for(e.code());
                send_json(res, status, error_body(status, error_code_name(e.code()), e.what(), e.detail()));
            } catch (const json::exception& e) {
                send_json(res, 400, error_body(400, "SchemaError", e.what(), nullptr));
            } catch (const std::exception& e) {
                send_json(res, 500, error_body(500, "Internal", e.what(), nullptr));
            }
        };
    }

    void routes();
};

void ApiServer::Impl::routes() {
    auto& s = server;
    s.set_payload_max_length(static_cast<std::size_t>(config.max_upload_mb) * 1024u * 1024u);
    s.set_default_headers({{"Access-Control-Allow-Origin", config.cors_origin},
                           {"Access-Control-Allow-Headers", "Content-Type, X-User, X-Share-Token"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    s.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (!res.body.empty()) return;
        const std::string code = res.status == 413 ? "TooLarge" : res.status == 404 ? "NotFound" : "HttpError";
        send_json(res, res.status, error_body(res.status, code, httplib::status_message(res.status), nullptr));
    });
    s.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    s.Get("/api/health", guarded([](const httplib::Request&, httplib::Response& res) {
              send_json(res, 200, json{{"status", "ok"}});
          }, false));

    s.Get("/api/profile", guarded([this](const httplib::Request&, httplib::Response& res) {
              send_json(res, 200, profile_to_json(profile));
          }));

    s.Get("/api/presets", guarded([](const httplib::Request&, httplib::Response& res) {
              json out = json::array();
              for (auto p : kAllPresets) out.push_back(json{{"id", preset_id(p)}, {"description", preset_description(p)}});
              send_json(res, 200, json{{"presets", out}});
          }));

    s.Post("/api/models", guarded([this](const httplib::Request& req, httplib::Response& res) {
               std::string bytes;
               if (req.is_multipart_form_data()) {
                   if (!req.has_file("package")) {
                       throw Error(ErrorCode::ValidationError, "multipart upload needs a 'package' field");
                   }
                   bytes = req.get_file_value("package").content;
               } else {
                   bytes = req.body;
               }
               if (bytes.empty()) throw Error(ErrorCode::ValidationError, "empty upload");
               const auto user = user_of(req);
               auto stored = workspace.store_model(bytes, user);
               json out = record_view(stored.record, user);
               out["duplicate"] = stored.duplicate;
               send_json(res, stored.duplicate ? 200 : 201, out);
           }));

    s.Get("/api/models", guarded([this](const httplib::Request& req, httplib::Response& res) {
              const auto user = user_of(req);
              json out = json::array();
              for (const auto& rec : workspace.list_models(user)) out.push_back(record_view(rec, user));
              send_json(res, 200, json{{"models", out}});
          }));

    s.Get(R"(/api/models/([0-9A-Za-z]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
              send_json(res, 200, record_view(visible_model(req, req.matches[1]), user_of(req)));
          }));

    s.Get(R"(/api/models/([0-9A-Za-z]+)/graph)", guarded([this](const httplib::Request& req, httplib::Response& res) {
              const std::string id = req.matches[1];
              visible_model(req, id);
              auto ctx = context(id);
              json out = graph_to_json(ctx->pkg->graph);
              out["graph_hash"] = ctx->hash;
              out["groups"] = group_to_json(group_tree(ctx->pkg->graph));
              send_json(res, 200, out);
          }));

    s.Get(R"(/api/models/([0-9A-Za-z]+)/metrics)", guarded([this](const httplib::Request& req, httplib::Response& res) {
              const std::string id = req.matches[1];
              visible_model(req, id);
              auto ctx = context(id);
              const auto sel = selection_param(req, id);
              report::MetricsQuery q;
              if (req.has_param("offset")) q.offset = static_cast<std::size_t>(std::max<std::int64_t>(0, parse_int(req.get_param_value("offset"), "offset")));
              if (req.has_param("limit")) q.limit = static_cast<std::size_t>(std::max<std::int64_t>(0, parse_int(req.get_param_value("limit"), "limit")));
              const auto sim = ctx->sim->simulate(sel.value_or(OptimizationSelection{}));
              send_json(res, 200, report::metrics_payload(ctx->pkg->graph, sim, sel.has_value(), q));
          }));

    s.Get(R"(/api/models/([0-9A-Za-z]+)/summary)", guarded([this](const httplib::Request& req, httplib::Response& res) {
              const std::string id = req.matches[1];
              visible_model(req, id);
              auto ctx = context(id);
              const auto sim = ctx->sim->simulate(selection_param(req, id).value_or(OptimizationSelection{}));
              send_json(res, 200, report::summary_payload(ctx->pkg->graph, sim));
          }));

    s.Get(R"(/api/models/([0-9A-Za-z]+)/tasks/([^/]+)/options)",
          guarded([this](const httplib::Request& req, httplib::Response& res) {
              const std::string id = req.matches[1];
              visible_model(req, id);
              auto ctx = context(id);
              const TaskId tid = task_param(req.matches[2], ctx->pkg->graph);
              const auto sel = selection_param(req, id).value_or(OptimizationSelection{});
              const auto key = fmt::format("{}|{}|{}", ctx->hash, tid, selection_digest(sel));
              {
                  std::lock_guard lock(cache_mutex);
                  if (auto it = option_cache.find(key); it != option_cache.end()) {
                      send_json(res, 200, it->second);
                      return;
                  }
              }
              json options = json::array();
              for (const auto& o : ctx->sim->enumerate_options(tid, sel)) options.push_back(option_to_json(o));
              json out{{"task", tid}, {"count", options.size()}, {"options", options}};
              std::lock_guard lock(cache_mutex);
              if (option_cache.size() > 4096) option_cache.clear();
              option_cache.emplace(key, out);
              send_json(res, 200, out);
          }));

    s.Post(R"(/api/models/([0-9A-Za-z]+)/simulate)", guarded([this](const httplib::Request& req, httplib::Response& res) {
               const std::string id = req.matches[1];
               visible_model(req, id);
               auto ctx = context(id);
               const auto sel = selection_from_json(parse_body(req));
               send_json(res, 200, simulation_to_json(ctx->pkg->graph, ctx->sim->simulate(sel)));
           }));

    s.Get(R"(/api/models/([0-9A-Za-z]+)/layout)", guarded([this](const httplib::Request& req, httplib::Response& res) {
              const std::string id = req.matches[1];
              visible_model(req, id);
              auto ctx = context(id);
              std::set<std::string> collapsed;
              if (req.has_param("collapse")) {
                  std::string list = req.get_param_value("collapse");
                  std::size_t pos = 0;
                  while (pos <= list.size()) {
                      auto next = list.find(',', pos);
                      if (next == std::string::npos) next = list.size();
                      if (next > pos) collapsed.insert(list.substr(pos, next - pos));
                      pos = next + 1;
                  }
              }
              std::string key = ctx->hash;
              for (const auto& c : collapsed) key += "|" + c;
              {
                  std::lock_guard lock(cache_mutex);
                  if (auto it = layout_cache.find(key); it != layout_cache.end()) {
                      send_json(res, 200, it->second);
                      return;
                  }
              }
              json out = layout_to_json(layout_graph(ctx->pkg->graph, collapsed));
              std::lock_guard lock(cache_mutex);
              if (layout_cache.size() > 1024) layout_cache.clear();
              layout_cache.emplace(key, out);
              send_json(res, 200, out);
          }));

    s.Get(R"(/api/models/([0-9A-Za-z]+)/timeline)", guarded([this](const httplib::Request& req, httplib::Response& res) {
              const std::string id = req.matches[1];
              visible_model(req, id);
              auto ctx = context(id);
              int engines = profile.engines;
              if (req.has_param("engines")) engines = static_cast<int>(parse_int(req.get_param_value("engines"), "engines"));
              if (engines < 1 || engines > 64) throw Error(ErrorCode::Usage, "engines must be between 1 and 64");
              const auto sim = ctx->sim->simulate(selection_param(req, id).value_or(OptimizationSelection{}));
              std::vector<TaskMetrics> metrics;
              std::vector<double> latencies;
              for (const auto& t : sim.per_task) {
                  metrics.push_back(t.optimized);
                  latencies.push_back(t.optimized.latency);
              }
              const auto sched = schedule(ctx->pkg->graph, metrics, engines);
              send_json(res, 200, json{{"engines", engines},
                                       {"makespan", sched.makespan},
                                       {"critical_path", critical_path(ctx->pkg->graph, latencies)},
                                       {"rows", timeline_to_json(sched)}});
          }));

    s.Post(R"(/api/models/([0-9A-Za-z]+)/analyses)", guarded([this](const httplib::Request& req, httplib::Response& res) {
               const std::string id = req.matches[1];
               const auto rec = visible_model(req, id);
               const json body = parse_body(req);
               if (!body.contains("name") || !body["name"].is_string()) {
                   throw Error(ErrorCode::SchemaError, "analysis needs a string 'name'", json{{"pointer", "/name"}});
               }
               const auto sel = selection_from_json(body.value("selection", json::object()));
               const auto token = token_of(req);
               auto a = workspace.save_analysis(id, body["name"].get<std::string>(), sel, user_of(req),
                                                token ? std::optional<std::string_view>(*token) : std::nullopt);
               json out = analysis_to_json(a);
               out["url"] = share_url(rec, a.analysis_id);
               send_json(res, 201, out);
           }));

    s.Get(R"(/api/models/([0-9A-Za-z]+)/analyses)", guarded([this](const httplib::Request& req, httplib::Response& res) {
              const std::string id = req.matches[1];
              const auto rec = visible_model(req, id);
              json out = json::array();
              for (const auto& a : workspace.list_analyses(id)) {
                  json item = analysis_to_json(a);
                  item["url"] = share_url(rec, a.analysis_id);
                  out.push_back(std::move(item));
              }
              send_json(res, 200, json{{"analyses", out}});
          }));

    s.Get(R"(/api/analyses/([0-9A-Za-z]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
              const std::string aid = req.matches[1];
              auto a = workspace.find_analysis(aid);
              if (!a) throw Error(ErrorCode::UnknownAnalysis, fmt::format("unknown analysis {}", aid), json{{"analysis_id", aid}});
              const auto rec = visible_model(req, a->model_id);
              json out = analysis_to_json(*a);
              out["url"] = share_url(rec, a->analysis_id);
              send_json(res, 200, out);
          }));

    s.Post(R"(/api/analyses/([0-9A-Za-z]+)/fork)", guarded([this](const httplib::Request& req, httplib::Response& res) {
               const std::string aid = req.matches[1];
               auto parent = workspace.find_analysis(aid);
               if (!parent) throw Error(ErrorCode::UnknownAnalysis, fmt::format("unknown analysis {}", aid), json{{"analysis_id", aid}});
               const auto rec = visible_model(req, parent->model_id);
               const auto token = token_of(req);
               auto a = workspace.fork_analysis(aid, user_of(req),
                                                token ? std::optional<std::string_view>(*token) : std::nullopt);
               json out = analysis_to_json(a);
               out["url"] = share_url(rec, a.analysis_id);
               send_json(res, 201, out);
           }));

    s.Post(R"(/api/models/([0-9A-Za-z]+)/share)", guarded([this](const httplib::Request& req, httplib::Response& res) {
               const std::string id = req.matches[1];
               visible_model(req, id);
               const json body = parse_body(req);
               std::optional<std::vector<std::string>> users;
               std::optional<bool> link;
               if (body.contains("users")) users = body["users"].get<std::vector<std::string>>();
               if (body.contains("link_sharing")) link = body["link_sharing"].get<bool>();
               const auto user = user_of(req);
               send_json(res, 200, record_view(workspace.update_sharing(id, user, users, link), user));
           }));

    s.Get("/api/diff", guarded([this](const httplib::Request& req, httplib::Response& res) {
              if (!req.has_param("base") || !req.has_param("target")) {
                  throw Error(ErrorCode::Usage, "diff needs base and target model ids");
              }
              const auto base_id = req.get_param_value("base");
              const auto target_id = req.get_param_value("target");
              visible_model(req, base_id);
              visible_model(req, target_id);
              auto base = context(base_id);
              auto target = context(target_id);
              const auto base_sel = selection_param(req, base_id, "analysis_base", "selection_base");
              const auto target_sel = selection_param(req, target_id, "analysis_target", "selection_target");
              const auto d = diff_models(base->pkg->graph, base_sel.value_or(OptimizationSelection{}),
                                         target->pkg->graph, target_sel.value_or(OptimizationSelection{}), profile);
              send_json(res, 200, diff_to_json(d));
          }));

    s.Get(R"(/api/models/([0-9A-Za-z]+)/tasks/([^/]+)/code)",
          guarded([this](const httplib::Request& req, httplib::Response& res) {
              const std::string id = req.matches[1];
              visible_model(req, id);
              auto ctx = context(id);
              const TaskId tid = task_param(req.matches[2], ctx->pkg->graph);
              json locs = json::array();
              for (const auto& l : locations_for_task(ctx->pkg->code_map, tid)) {
                  locs.push_back(json{{"file", l.file},
                                      {"line", l.line},
                                      {"snippet", l.snippet},
                                      {"available", ctx->pkg->sources.contains(l.file)}});
              }
              send_json(res, 200, json{{"task", tid}, {"locations", locs}});
          }));

    s.Get(R"(/api/models/([0-9A-Za-z]+)/code)", guarded([this](const httplib::Request& req, httplib::Response& res) {
              const std::string id = req.matches[1];
              visible_model(req, id);
              auto ctx = context(id);
              if (!req.has_param("file")) throw Error(ErrorCode::Usage, "file parameter is required");
              std::optional<LineWindow> window;
              if (req.has_param("start") || req.has_param("end")) {
                  const int start = req.has_param("start") ? static_cast<int>(parse_int(req.get_param_value("start"), "start")) : 1;
                  const int end = req.has_param("end") ? static_cast<int>(parse_int(req.get_param_value("end"), "end"))
                                                       : std::numeric_limits<int>::max();
                  window = LineWindow{start, end};
              }
              const auto slice = read_source(ctx->pkg->sources, req.get_param_value("file"), window);
              send_json(res, 200, json{{"file", slice.file},
                                       {"start_line", slice.start_line},
                                       {"end_line", slice.end_line},
                                       {"total_lines", slice.total_lines},
                                       {"text", slice.text}});
          }));

    if (config.ui_dir) s.set_mount_point("/", config.ui_dir->string());
}

ApiServer::ApiServer(ApiConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}
ApiServer::~ApiServer() { stop(); }

bool ApiServer::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }
int ApiServer::bind_any(const std::string& host) { return impl_->server.bind_to_any_port(host); }
bool ApiServer::listen_after_bind() { return impl_->server.listen_after_bind(); }
void ApiServer::stop() {
    if (impl_) impl_->server.stop();
}
void ApiServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace tasklens
