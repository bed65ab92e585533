#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "ucm/service/server.hpp"

namespace ucm::testgen {

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("ucm-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// A service on an ephemeral localhost port, running on a background thread
/// for the lifetime of the object.
class ServiceHarness {
 public:
  explicit ServiceHarness(std::shared_ptr<llm::Provider> provider, std::optional<std::filesystem::path> dir = std::nullopt,
                          pipeline::EngineConfig engine_cfg = {}) {
    if (!dir) {
      owned_dir_.emplace();
      dir = owned_dir_->path();
    }
    service::ServiceConfig cfg;
    cfg.port = 0;
    cfg.data_dir = *dir;
    service_ = std::make_unique<service::Service>(cfg, std::move(provider), std::move(engine_cfg));
    port_ = service_->bind();
    thread_ = std::thread([this] { service_->listen(); });
    service_->wait_until_ready();
    client_ = make_client();
  }

  ~ServiceHarness() {
    service_->stop();
    thread_.join();
  }

  ServiceHarness(const ServiceHarness&) = delete;
  ServiceHarness& operator=(const ServiceHarness&) = delete;

  int port() const { return port_; }
  const service::ServiceConfig& config() const { return service_->config(); }
  service::Service& service() { return *service_; }

  std::unique_ptr<httplib::Client> make_client() const {
    auto c = std::make_unique<httplib::Client>("127.0.0.1", port_);
    c->set_read_timeout(60, 0);
    c->set_connection_timeout(10, 0);
    return c;
  }

  httplib::Client& client() { return *client_; }

  httplib::Result post(const std::string& path, const nlohmann::json& body) {
    return client_->Post(path, body.dump(), "application/json");
  }

  /// Creates a session and returns its id, or "" on failure.
  std::string create(const std::string& title, const std::string& text) {
    auto r = post("/sessions", {{"title", title}, {"text", text}});
    if (!r || r->status != 201) return "";
    return nlohmann::json::parse(r->body).at("id").get<std::string>();
  }

  /// Sends one session-script action through the REST surface.
  httplib::Result apply_action(const std::string& id, const nlohmann::json& action) {
    const std::string kind = action.value("action", "");
    const std::string base = "/sessions/" + id;
    if (kind == "run") return post(base + "/stages/" + action.value("stage", "") + "/run", action);
    if (kind == "confirm") return post(base + "/confirm", nlohmann::json::object());
    return post(base + "/edits", {{"edits", action.value("edits", nlohmann::json::array())}});
  }

 private:
  std::optional<TempDir> owned_dir_;
  std::unique_ptr<service::Service> service_;
  int port_ = 0;
  std::thread thread_;
  std::unique_ptr<httplib::Client> client_;
};

}  // namespace ucm::testgen
