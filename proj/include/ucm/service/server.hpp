#pragma once

#include <cstdlib>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "ucm/error.hpp"
#include "ucm/llm/provider.hpp"
#include "ucm/pipeline/actions.hpp"
#include "ucm/pipeline/engine.hpp"
#include "ucm/service/store.hpp"

#ifndef UCM_VERSION
#define UCM_VERSION "dev"
#endif

namespace ucm::service {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path data_dir = "ucm-data";
  std::string cors_origin = "http://localhost:5173";
};

/// UCM_DATA_DIR overrides the data directory unless the caller set one
/// explicitly.
inline ServiceConfig service_config_from_env(ServiceConfig base, bool data_dir_given = false) {
  if (!data_dir_given) {
    if (const char* v = std::getenv("UCM_DATA_DIR"); v && *v) base.data_dir = v;
  }
  return base;
}

inline void check_config(const ServiceConfig& cfg) {
  if (cfg.port < 0 || cfg.port > 65535) throw Error("E-CONFIG", "port out of range", {{"port", cfg.port}});
  if (cfg.host.empty()) throw Error("E-CONFIG", "bind address is empty");
}

inline int http_status(const std::string& code) {
  static const std::map<std::string, int> table{
      {"E-BAD-REQUEST", 400},      {"E-EMPTY-REQUIREMENTS", 400}, {"E-NOT-FOUND", 404},
      {"E-STAGE-ORDER", 409},      {"E-NOTHING-TO-CONFIRM", 409}, {"E-NO-MODEL", 409},
      {"E-BAD-EDIT", 422},         {"E-UNKNOWN-TARGET", 422},     {"E-EMPTY-NAME", 422},
      {"E-UNKNOWN-USECASE", 422},  {"E-INVALID-MODEL", 422},      {"E-HTTP", 502},
      {"E-TRANSPORT", 502},        {"E-TIMEOUT", 502},            {"E-NO-FIXTURE", 502},
      {"E-SCRIPT-EXHAUSTED", 502}, {"E-REPAIR-FAILED", 502},      {"E-CONFIG", 502}};
  auto it = table.find(code);
  return it == table.end() ? 500 : it->second;
}

class Service {
 public:
  Service(ServiceConfig cfg, std::shared_ptr<llm::Provider> provider, pipeline::EngineConfig engine_cfg = {})
      : cfg_((check_config(cfg), std::move(cfg))), store_(cfg_.data_dir), engine_(std::move(provider), std::move(engine_cfg)) {
    routes();
  }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  const ServiceConfig& config() const { return cfg_; }
  SessionStore& store() { return store_; }
  httplib::Server& http() { return server_; }

  /// Binds the listening socket and returns the port.
  int bind() {
    int port = cfg_.port == 0 ? server_.bind_to_any_port(cfg_.host) : (server_.bind_to_port(cfg_.host, cfg_.port) ? cfg_.port : -1);
    if (port < 0) throw Error("E-IO", "cannot bind " + cfg_.host + ":" + std::to_string(cfg_.port));
    return port;
  }

  /// Blocks until stop() is called. Call bind() first.
  bool listen() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() { server_.wait_until_ready(); }

 private:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  static void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void send_error(httplib::Response& res, const Error& e) {
    send_json(res, http_status(e.code()), e.to_json());
  }

  static nlohmann::json parse_body(const httplib::Request& req, bool required) {
    if (req.body.empty()) {
      if (required) throw Error("E-BAD-REQUEST", "request body is empty");
      return nlohmann::json::object();
    }
    auto j = nlohmann::json::parse(req.body, nullptr, false);
    if (j.is_discarded()) throw Error("E-BAD-REQUEST", "request body is not valid JSON");
    return j;
  }

  Handler guarded(Handler h) const {
    return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
      try {
        h(req, res);
      } catch (const Error& e) {
        send_error(res, e);
      } catch (const std::exception& e) {
        send_error(res, Error("E-INTERNAL", e.what()));
      }
    };
  }

  std::shared_ptr<std::mutex> lock_for(const std::string& id) {
    std::lock_guard guard(locks_mutex_);
    auto& m = locks_[id];
    if (!m) m = std::make_shared<std::mutex>();
    return m;
  }

  /// Loads, mutates and saves one session under its lock, so requests to the
  /// same session are applied one at a time.
  template <class Fn>
  pipeline::Session with_session(const std::string& id, Fn&& fn) {
    if (!valid_session_id(id)) throw Error("E-NOT-FOUND", "no session with id '" + id + "'", {{"id", id}});
    auto m = lock_for(id);
    std::lock_guard guard(*m);
    auto s = store_.load(id);
    if (fn(s)) store_.save(s);
    return s;
  }

  pipeline::Session read_session(const std::string& id) {
    return with_session(id, [](pipeline::Session&) { return false; });
  }

  void routes() {
    server_.set_post_routing_handler([this](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", cfg_.cors_origin);
      res.set_header("Vary", "Origin");
    });
    server_.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });
    server_.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (!res.body.empty()) return;
      if (res.status == 404) send_json(res, 404, {{"code", "E-NOT-FOUND"}, {"message", "no such resource"}});
      else if (res.status == 405) send_json(res, 405, {{"code", "E-BAD-REQUEST"}, {"message", "method not allowed"}});
      else if (res.status >= 400) send_json(res, res.status, {{"code", "E-BAD-REQUEST"}, {"message", "request rejected"}});
    });

    server_.Get("/health", guarded([](const httplib::Request&, httplib::Response& res) {
                  send_json(res, 200, {{"status", "ok"}, {"version", UCM_VERSION}});
                }));

    server_.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
                   auto body = parse_body(req, true);
                   if (!body.is_object()) throw Error("E-BAD-REQUEST", "expected an object with 'title' and 'text'");
                   if (!body.contains("text") || !body["text"].is_string())
                     throw Error("E-BAD-REQUEST", "'text' must be a string");
                   if (body.contains("title") && !body["title"].is_string())
                     throw Error("E-BAD-REQUEST", "'title' must be a string");
                   auto s = engine_.start_session({"", body.value("title", ""), body["text"].get<std::string>()});
                   for (int tries = 0; store_.exists(s.id) && tries < 8; ++tries) {
                     s = engine_.start_session({"", s.requirements.title, s.requirements.text});
                   }
                   if (store_.exists(s.id)) throw Error("E-INTERNAL", "could not allocate a fresh session id");
                   auto m = lock_for(s.id);
                   std::lock_guard guard(*m);
                   store_.save(s);
                   send_json(res, 201, s);
                 }));

    server_.Get("/sessions", guarded([this](const httplib::Request&, httplib::Response& res) {
                  send_json(res, 200, {{"sessions", store_.list()}});
                }));

    server_.Get("/sessions/:id", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  send_json(res, 200, read_session(req.path_params.at("id")));
                }));

    server_.Post("/sessions/:id/stages/:stage/run", guarded([this](const httplib::Request& req, httplib::Response& res) {
                   auto step = pipeline::parse_step(req.path_params.at("stage"));
                   if (!step) {
                     throw Error("E-NOT-FOUND", "unknown stage '" + req.path_params.at("stage") + "'",
                                 {{"stage", req.path_params.at("stage")}});
                   }
                   auto body = parse_body(req, false);
                   auto s = with_session(req.path_params.at("id"), [&](pipeline::Session& s) {
                     pipeline::run_step(engine_, s, *step, body);
                     return true;
                   });
                   send_json(res, 200, s);
                 }));

    server_.Post("/sessions/:id/edits", guarded([this](const httplib::Request& req, httplib::Response& res) {
                   auto body = parse_body(req, true);
                   auto s = with_session(req.path_params.at("id"), [&](pipeline::Session& s) {
                     engine_.apply_edits(s, pipeline::parse_edits(body));
                     return true;
                   });
                   send_json(res, 200, s);
                 }));

    server_.Post("/sessions/:id/confirm", guarded([this](const httplib::Request& req, httplib::Response& res) {
                   auto s = with_session(req.path_params.at("id"), [&](pipeline::Session& s) {
                     engine_.confirm(s);
                     return true;
                   });
                   send_json(res, 200, s);
                 }));

    server_.Get("/sessions/:id/export", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  auto format = req.has_param("format") ? req.get_param_value("format") : std::string("json");
                  auto s = read_session(req.path_params.at("id"));
                  if (format == "puml") {
                    res.set_content(pipeline::export_session(s, pipeline::ExportFormat::puml), "text/plain; charset=utf-8");
                  } else if (format == "json") {
                    res.set_content(pipeline::export_session(s, pipeline::ExportFormat::json), "application/json");
                  } else {
                    throw Error("E-BAD-REQUEST", "format must be puml or json", {{"format", format}});
                  }
                  res.status = 200;
                }));

    server_.Get("/sessions/:id/model", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  auto s = read_session(req.path_params.at("id"));
                  if (!s.model) throw Error("E-NO-MODEL", "the session has no model yet", {{"stage", pipeline::stage_name(s.stage)}});
                  send_json(res, 200, *s.model);
                }));
  }

  ServiceConfig cfg_;
  SessionStore store_;
  pipeline::Engine engine_;
  httplib::Server server_;
  std::mutex locks_mutex_;
  std::map<std::string, std::shared_ptr<std::mutex>> locks_;
};

}  // namespace ucm::service
