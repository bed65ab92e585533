#pragma once

#include <deque>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "ucm/error.hpp"
#include "ucm/llm/request.hpp"

namespace ucm::llm {

/// A completion backend. Implementations must be safe to call from several
/// threads at once.
class Provider {
 public:
  virtual ~Provider() = default;
  virtual CompletionResponse complete(const CompletionRequest& request) = 0;
  virtual std::string name() const = 0;
};

inline CompletionResponse complete(Provider& provider, const CompletionRequest& request) {
  check_request(request);
  return provider.complete(request);
}

/// Returns queued replies in order and keeps every request it was given.
class ScriptedProvider : public Provider {
 public:
  ScriptedProvider() = default;
  explicit ScriptedProvider(std::vector<std::string> replies) {
    for (auto& r : replies) replies_.push_back(std::move(r));
  }

  void push(std::string reply) {
    std::lock_guard lock(mu_);
    replies_.push_back(std::move(reply));
  }

  CompletionResponse complete(const CompletionRequest& request) override {
    std::lock_guard lock(mu_);
    requests_.push_back(request);
    if (replies_.empty()) throw Error("E-SCRIPT-EXHAUSTED", "scripted provider has no reply left", {{"hash", request_hash(request)}});
    CompletionResponse r{std::move(replies_.front()), {{"provider", "scripted"}}};
    replies_.pop_front();
    return r;
  }

  std::string name() const override { return "scripted"; }

  std::vector<CompletionRequest> requests() const {
    std::lock_guard lock(mu_);
    return requests_;
  }

  std::size_t remaining() const {
    std::lock_guard lock(mu_);
    return replies_.size();
  }

 private:
  mutable std::mutex mu_;
  std::deque<std::string> replies_;
  std::vector<CompletionRequest> requests_;
};

inline std::filesystem::path fixture_path(const std::filesystem::path& dir, const std::string& hash) {
  return dir / (hash + ".json");
}

/// Serves recorded replies keyed by request hash. The fixture directory is
/// only read, so concurrent use needs no locking.
class ReplayProvider : public Provider {
 public:
  explicit ReplayProvider(std::filesystem::path dir) : dir_(std::move(dir)) {}

  CompletionResponse complete(const CompletionRequest& request) override {
    const std::string hash = request_hash(request);
    const auto path = fixture_path(dir_, hash);
    std::ifstream in(path);
    if (!in) {
      throw Error("E-NO-FIXTURE", "no recorded reply for request " + hash, {{"hash", hash}, {"dir", dir_.string()}});
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw Error("E-NO-FIXTURE", "fixture " + path.string() + " is unreadable: " + e.what(), {{"hash", hash}});
    }
    return {j.at("content").get<std::string>(), {{"provider", "replay"}, {"hash", hash}}};
  }

  std::string name() const override { return "replay"; }

 private:
  std::filesystem::path dir_;
};

/// Forwards to another provider and stores each reply as a replay fixture.
class RecordingProvider : public Provider {
 public:
  RecordingProvider(std::shared_ptr<Provider> inner, std::filesystem::path dir) : inner_(std::move(inner)), dir_(std::move(dir)) {}

  CompletionResponse complete(const CompletionRequest& request) override {
    auto response = inner_->complete(request);
    const std::string hash = request_hash(request);
    nlohmann::json fixture = {{"hash", hash}, {"request", request}, {"content", response.content}};
    std::lock_guard lock(mu_);
    std::filesystem::create_directories(dir_);
    const auto path = fixture_path(dir_, hash);
    const auto tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << fixture.dump(2) << '\n';
      if (!out) throw Error("E-IO", "cannot write fixture " + tmp);
    }
    std::filesystem::rename(tmp, path);
    response.provider_meta["recorded"] = hash;
    return response;
  }

  std::string name() const override { return "record(" + inner_->name() + ")"; }

 private:
  std::shared_ptr<Provider> inner_;
  std::filesystem::path dir_;
  std::mutex mu_;
};

}  // namespace ucm::llm
