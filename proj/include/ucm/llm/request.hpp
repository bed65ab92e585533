#pragma once

#include <openssl/evp.h>

#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ucm/error.hpp"

namespace ucm::llm {

enum class Role { system, user };

NLOHMANN_JSON_SERIALIZE_ENUM(Role, {{Role::system, "system"}, {Role::user, "user"}})

struct Message {
  Role role = Role::user;
  std::string content;
  bool operator==(const Message&) const = default;
};

inline void to_json(nlohmann::json& j, const Message& m) { j = {{"role", m.role}, {"content", m.content}}; }
inline void from_json(const nlohmann::json& j, Message& m) {
  j.at("role").get_to(m.role);
  j.at("content").get_to(m.content);
}

struct CompletionRequest {
  std::vector<Message> messages;
  double temperature = 0.2;
  int max_tokens = 2048;
  std::string model_name = "default";
  bool operator==(const CompletionRequest&) const = default;
};

inline void to_json(nlohmann::json& j, const CompletionRequest& r) {
  j = {{"messages", r.messages}, {"temperature", r.temperature}, {"max_tokens", r.max_tokens}, {"model_name", r.model_name}};
}
inline void from_json(const nlohmann::json& j, CompletionRequest& r) {
  j.at("messages").get_to(r.messages);
  r.temperature = j.value("temperature", 0.2);
  r.max_tokens = j.value("max_tokens", 2048);
  r.model_name = j.value("model_name", std::string("default"));
}

struct CompletionResponse {
  std::string content;
  nlohmann::json provider_meta = nlohmann::json::object();
};

inline void check_request(const CompletionRequest& r) {
  if (r.messages.empty()) throw Error("E-BAD-REQUEST", "a completion request needs at least one message");
  if (r.messages.front().role != Role::system) throw Error("E-BAD-REQUEST", "the first message must have role system");
  if (r.temperature < 0.0) throw Error("E-BAD-REQUEST", "temperature must be non-negative");
  if (r.max_tokens <= 0) throw Error("E-BAD-REQUEST", "max_tokens must be positive");
}

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("E-INTERNAL", "SHA-256 computation failed");
  }
  std::string hex;
  hex.reserve(len * 2);
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

/// Canonical key material for fixtures: model name, temperature and messages.
/// max_tokens is deliberately left out.
inline std::string canonical_key(const CompletionRequest& r) {
  nlohmann::json j = {{"messages", r.messages}, {"model_name", r.model_name}, {"temperature", r.temperature}};
  return j.dump();
}

inline std::string request_hash(const CompletionRequest& r) { return sha256_hex(canonical_key(r)); }

}  // namespace ucm::llm
