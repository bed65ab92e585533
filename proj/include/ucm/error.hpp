#pragma once

#include <stdexcept>
#include <string>
#include <utility>

#include <json.hpp>

namespace ucm {

/// Domain failure carrying a stable code (e.g. "E-SYNTAX") and optional
/// structured details (line numbers, violation lists, request hashes).
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message, nlohmann::json details = nlohmann::json::object())
      : std::runtime_error(message), code_(std::move(code)), details_(std::move(details)) {}

  const std::string& code() const noexcept { return code_; }
  const nlohmann::json& details() const noexcept { return details_; }

  nlohmann::json to_json() const {
    nlohmann::json j{{"code", code_}, {"message", what()}};
    if (!details_.empty()) j["details"] = details_;
    return j;
  }

 private:
  std::string code_;
  nlohmann::json details_;
};

}  // namespace ucm
