#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "ucm/error.hpp"
#include "ucm/pipeline/engine.hpp"

namespace ucm::pipeline {

/// Runs one workflow step and returns what it produced as JSON. For the
/// descriptions step `body` may carry "usecase_ids"; without it every use
/// case in the model is described.
inline nlohmann::json run_step(const Engine& engine, Session& s, Step step, const nlohmann::json& body = nlohmann::json::object()) {
  switch (step) {
    case Step::actors:
      return {{"actors", engine.run_actor_stage(s)}};
    case Step::usecases:
      return {{"use_cases", engine.run_usecase_stage(s)}};
    case Step::model: {
      auto [source, model] = engine.run_model_stage(s);
      return {{"source", source.text}, {"model", model}};
    }
    case Step::descriptions: {
      std::vector<std::string> ids;
      if (body.is_object() && body.contains("usecase_ids")) {
        if (!body.at("usecase_ids").is_array()) throw Error("E-BAD-REQUEST", "usecase_ids must be a list of strings");
        for (const auto& v : body.at("usecase_ids")) {
          if (!v.is_string()) throw Error("E-BAD-REQUEST", "usecase_ids must be a list of strings");
          ids.push_back(v.get<std::string>());
        }
      } else if (s.model) {
        for (const auto& uc : s.model->use_cases) ids.push_back(uc.id);
      }
      return {{"descriptions", engine.run_description_stage(s, ids)}};
    }
  }
  return nullptr;
}

inline std::vector<Edit> parse_edits(const nlohmann::json& j) {
  const nlohmann::json& list = j.is_object() && j.contains("edits") ? j.at("edits") : j;
  if (!list.is_array()) throw Error("E-BAD-EDIT", "expected a list of edits");
  std::vector<Edit> edits;
  for (const auto& e : list) edits.push_back(e.get<Edit>());
  return edits;
}

/// Applies one scripted action:
///   {"action": "run", "stage": "actors" | "usecases" | "model" | "descriptions", ...}
///   {"action": "confirm"}
///   {"action": "edits", "edits": [...]}
inline nlohmann::json apply_action(const Engine& engine, Session& s, const nlohmann::json& action) {
  if (!action.is_object()) throw Error("E-BAD-REQUEST", "an action must be a JSON object");
  const std::string kind = action.value("action", std::string{});
  if (kind == "run") {
    auto step = parse_step(action.value("stage", std::string{}));
    if (!step) throw Error("E-BAD-REQUEST", "run needs a stage: actors, usecases, model or descriptions");
    return run_step(engine, s, *step, action);
  }
  if (kind == "confirm") {
    engine.confirm(s);
    return {{"stage", s.stage}};
  }
  if (kind == "edits") {
    engine.apply_edits(s, parse_edits(action));
    return {{"edit_log_size", s.edit_log.size()}};
  }
  throw Error("E-BAD-REQUEST", "unknown action '" + kind + "'");
}

struct SessionScript {
  std::string title;
  std::vector<nlohmann::json> actions;
};

inline SessionScript parse_session_script(const nlohmann::json& j) {
  SessionScript sc;
  sc.title = j.value("title", std::string{});
  if (!j.contains("actions") || !j.at("actions").is_array()) throw Error("E-BAD-REQUEST", "a session script needs an 'actions' list");
  for (const auto& a : j.at("actions")) sc.actions.push_back(a);
  return sc;
}

inline Session run_session_script(const Engine& engine, const std::string& requirements, const SessionScript& script) {
  Session s = engine.start_session({"", script.title, requirements});
  for (const auto& action : script.actions) apply_action(engine, s, action);
  return s;
}

}  // namespace ucm::pipeline
