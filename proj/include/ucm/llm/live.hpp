#pragma once

#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <functional>
#include <optional>
#include <regex>
#include <string>
#include <thread>

#include <json.hpp>

#include "ucm/error.hpp"
#include "ucm/llm/provider.hpp"

namespace ucm::llm {

struct LiveConfig {
  std::string endpoint;  // full URL of the chat-completions resource
  std::string model;     // overrides the request's model_name when set
  std::string api_key;
  std::chrono::milliseconds timeout{120000};
  int max_attempts = 3;
  std::chrono::milliseconds backoff_base{500};
};

/// Reads UCM_LLM_ENDPOINT, UCM_LLM_MODEL and UCM_LLM_API_KEY. Values already
/// set in `base` (for example from command line flags) win.
inline LiveConfig live_config_from_env(LiveConfig base = {}) {
  auto env = [](const char* name) -> std::string {
    const char* v = std::getenv(name);
    return v ? std::string(v) : std::string();
  };
  if (base.endpoint.empty()) base.endpoint = env("UCM_LLM_ENDPOINT");
  if (base.model.empty()) base.model = env("UCM_LLM_MODEL");
  if (base.api_key.empty()) base.api_key = env("UCM_LLM_API_KEY");
  return base;
}

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

inline Endpoint split_endpoint(const std::string& url) {
  static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)", std::regex::icase);
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw Error("E-CONFIG", "endpoint '" + url + "' is not an http(s) URL");
  return {m[1].str(), m[2].matched ? m[2].str() : std::string("/v1/chat/completions")};
}

/// Chat-completions client over HTTP. Transport failures, HTTP 429 and 5xx
/// replies are retried with exponential backoff; other statuses fail at once.
class LiveProvider : public Provider {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit LiveProvider(LiveConfig cfg, Sleeper sleeper = {})
      : cfg_(std::move(cfg)), endpoint_(split_endpoint(cfg_.endpoint)), sleep_(std::move(sleeper)) {
    if (!sleep_) sleep_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
    if (cfg_.max_attempts < 1) cfg_.max_attempts = 1;
  }

  CompletionResponse complete(const CompletionRequest& request) override {
    nlohmann::json body = {{"model", cfg_.model.empty() ? request.model_name : cfg_.model},
                           {"messages", request.messages},
                           {"temperature", request.temperature},
                           {"max_tokens", request.max_tokens},
                           {"stream", false}};
    const std::string payload = body.dump();

    std::optional<Error> last;
    for (int attempt = 1; attempt <= cfg_.max_attempts; ++attempt) {
      if (attempt > 1) sleep_(cfg_.backoff_base * (1 << (attempt - 2)));

      httplib::Client client(endpoint_.origin);
      const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg_.timeout);
      const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg_.timeout - secs);
      client.set_connection_timeout(secs.count(), usecs.count());
      client.set_read_timeout(secs.count(), usecs.count());
      client.set_write_timeout(secs.count(), usecs.count());
      httplib::Headers headers;
      if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

      const auto started = std::chrono::steady_clock::now();
      auto res = client.Post(endpoint_.path, headers, payload, "application/json");
      if (!res) {
        const auto elapsed = std::chrono::steady_clock::now() - started;
        if (res.error() == httplib::Error::ConnectionTimeout || elapsed >= cfg_.timeout) {
          throw Error("E-TIMEOUT", "no reply within " + std::to_string(cfg_.timeout.count()) + " ms",
                      {{"attempts", attempt}, {"endpoint", cfg_.endpoint}});
        }
        last = Error("E-TRANSPORT", "request failed: " + httplib::to_string(res.error()),
                     {{"attempts", attempt}, {"endpoint", cfg_.endpoint}});
        continue;
      }
      if (res->status == 429 || res->status >= 500) {
        last = Error("E-HTTP", "endpoint answered HTTP " + std::to_string(res->status),
                     {{"status", res->status}, {"attempts", attempt}, {"body", res->body.substr(0, 500)}});
        continue;
      }
      if (res->status < 200 || res->status >= 300) {
        throw Error("E-HTTP", "endpoint answered HTTP " + std::to_string(res->status),
                    {{"status", res->status}, {"attempts", attempt}, {"body", res->body.substr(0, 500)}});
      }
      try {
        auto j = nlohmann::json::parse(res->body);
        CompletionResponse out;
        out.content = j.at("choices").at(0).at("message").at("content").get<std::string>();
        out.provider_meta = {{"provider", "live"}, {"attempts", attempt}};
        if (j.contains("model")) out.provider_meta["model"] = j["model"];
        if (j.contains("usage")) out.provider_meta["usage"] = j["usage"];
        return out;
      } catch (const nlohmann::json::exception& e) {
        throw Error("E-TRANSPORT", std::string("unexpected reply body: ") + e.what(), {{"attempts", attempt}});
      }
    }
    throw *last;
  }

  std::string name() const override { return "live"; }

 private:
  LiveConfig cfg_;
  Endpoint endpoint_;
  Sleeper sleep_;
};

}  // namespace ucm::llm
