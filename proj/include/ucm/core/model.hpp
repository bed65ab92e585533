#pragma once

#include <algorithm>
#include <compare>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "ucm/core/text.hpp"
#include "ucm/error.hpp"

namespace ucm {

enum class ActorKind { human, external_system, hardware };
enum class RelationKind { include, extend };

NLOHMANN_JSON_SERIALIZE_ENUM(ActorKind, {{ActorKind::human, "human"},
                                         {ActorKind::external_system, "external_system"},
                                         {ActorKind::hardware, "hardware"}})
NLOHMANN_JSON_SERIALIZE_ENUM(RelationKind, {{RelationKind::include, "include"}, {RelationKind::extend, "extend"}})

inline std::string_view to_string(ActorKind k) {
  switch (k) {
    case ActorKind::human: return "human";
    case ActorKind::external_system: return "external_system";
    case ActorKind::hardware: return "hardware";
  }
  return "human";
}

inline std::string_view to_string(RelationKind k) { return k == RelationKind::include ? "include" : "extend"; }

/// Half-open character range [start, end) into the requirements text.
struct SourceSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  auto operator<=>(const SourceSpan&) const = default;
};

struct Actor {
  std::string id;
  std::string name;
  ActorKind kind = ActorKind::human;
  std::vector<SourceSpan> source_spans;
  bool operator==(const Actor&) const = default;
};

struct UseCase {
  std::string id;
  std::string title;
  std::vector<std::string> actor_ids;  // set semantics; kept sorted by normalize()
  std::vector<SourceSpan> source_spans;
  bool operator==(const UseCase&) const = default;
};

struct Association {
  std::string actor_id;
  std::string usecase_id;
  auto operator<=>(const Association&) const = default;
};

struct UseCaseRelation {
  std::string from_id;
  std::string to_id;
  RelationKind kind = RelationKind::include;
  auto operator<=>(const UseCaseRelation&) const = default;
};

struct UseCaseModel {
  std::string system_name = "System";
  std::vector<Actor> actors;
  std::vector<UseCase> use_cases;
  std::vector<Association> associations;
  std::vector<UseCaseRelation> relations;
  bool operator==(const UseCaseModel&) const = default;

  const Actor* find_actor(std::string_view id) const {
    auto it = std::find_if(actors.begin(), actors.end(), [&](const Actor& a) { return a.id == id; });
    return it == actors.end() ? nullptr : &*it;
  }
  const UseCase* find_use_case(std::string_view id) const {
    auto it = std::find_if(use_cases.begin(), use_cases.end(), [&](const UseCase& u) { return u.id == id; });
    return it == use_cases.end() ? nullptr : &*it;
  }
};

struct AlternativeFlow {
  std::string label;
  std::vector<std::string> steps;
  bool operator==(const AlternativeFlow&) const = default;
};

struct UseCaseDescription {
  std::string usecase_id;
  std::vector<std::string> preconditions;
  std::vector<std::string> main_flow;
  std::vector<AlternativeFlow> alternative_flows;
  std::vector<std::string> postconditions;
  bool operator==(const UseCaseDescription&) const = default;
};

struct RequirementsDoc {
  std::string id;
  std::string title;
  std::string text;
  bool operator==(const RequirementsDoc&) const = default;
};

struct Violation {
  std::string code;
  std::string element_id;
  std::string message;
  bool operator==(const Violation&) const = default;
};

// ---------------------------------------------------------------------------
// JSON (canonical interchange form; keys sorted by the default json object)

inline void to_json(nlohmann::json& j, const SourceSpan& s) { j = nlohmann::json::array({s.start, s.end}); }
inline void from_json(const nlohmann::json& j, SourceSpan& s) {
  if (!j.is_array() || j.size() != 2) throw nlohmann::json::type_error::create(302, "source span must be [start, end]", &j);
  s.start = j[0].get<std::size_t>();
  s.end = j[1].get<std::size_t>();
}

inline void to_json(nlohmann::json& j, const Actor& a) {
  j = {{"id", a.id}, {"name", a.name}, {"kind", a.kind}, {"source_spans", a.source_spans}};
}
inline void from_json(const nlohmann::json& j, Actor& a) {
  j.at("id").get_to(a.id);
  j.at("name").get_to(a.name);
  a.kind = j.value("kind", ActorKind::human);
  a.source_spans = j.value("source_spans", std::vector<SourceSpan>{});
}

inline void to_json(nlohmann::json& j, const UseCase& u) {
  j = {{"id", u.id}, {"title", u.title}, {"actor_ids", u.actor_ids}, {"source_spans", u.source_spans}};
}
inline void from_json(const nlohmann::json& j, UseCase& u) {
  j.at("id").get_to(u.id);
  j.at("title").get_to(u.title);
  u.actor_ids = j.value("actor_ids", std::vector<std::string>{});
  u.source_spans = j.value("source_spans", std::vector<SourceSpan>{});
}

inline void to_json(nlohmann::json& j, const Association& a) { j = {{"actor_id", a.actor_id}, {"usecase_id", a.usecase_id}}; }
inline void from_json(const nlohmann::json& j, Association& a) {
  j.at("actor_id").get_to(a.actor_id);
  j.at("usecase_id").get_to(a.usecase_id);
}

inline void to_json(nlohmann::json& j, const UseCaseRelation& r) {
  j = {{"from_id", r.from_id}, {"to_id", r.to_id}, {"kind", r.kind}};
}
inline void from_json(const nlohmann::json& j, UseCaseRelation& r) {
  j.at("from_id").get_to(r.from_id);
  j.at("to_id").get_to(r.to_id);
  j.at("kind").get_to(r.kind);
}

inline void to_json(nlohmann::json& j, const UseCaseModel& m) {
  j = {{"system_name", m.system_name},
       {"actors", m.actors},
       {"use_cases", m.use_cases},
       {"associations", m.associations},
       {"relations", m.relations}};
}
inline void from_json(const nlohmann::json& j, UseCaseModel& m) {
  j.at("system_name").get_to(m.system_name);
  m.actors = j.value("actors", std::vector<Actor>{});
  m.use_cases = j.value("use_cases", std::vector<UseCase>{});
  m.associations = j.value("associations", std::vector<Association>{});
  m.relations = j.value("relations", std::vector<UseCaseRelation>{});
}

inline void to_json(nlohmann::json& j, const AlternativeFlow& f) { j = {{"label", f.label}, {"steps", f.steps}}; }
inline void from_json(const nlohmann::json& j, AlternativeFlow& f) {
  f.label = j.value("label", std::string{});
  j.at("steps").get_to(f.steps);
}

inline void to_json(nlohmann::json& j, const UseCaseDescription& d) {
  j = {{"usecase_id", d.usecase_id},
       {"preconditions", d.preconditions},
       {"main_flow", d.main_flow},
       {"alternative_flows", d.alternative_flows},
       {"postconditions", d.postconditions}};
}
inline void from_json(const nlohmann::json& j, UseCaseDescription& d) {
  j.at("usecase_id").get_to(d.usecase_id);
  d.preconditions = j.value("preconditions", std::vector<std::string>{});
  j.at("main_flow").get_to(d.main_flow);
  d.alternative_flows = j.value("alternative_flows", std::vector<AlternativeFlow>{});
  d.postconditions = j.value("postconditions", std::vector<std::string>{});
}

inline void to_json(nlohmann::json& j, const RequirementsDoc& d) { j = {{"id", d.id}, {"title", d.title}, {"text", d.text}}; }
inline void from_json(const nlohmann::json& j, RequirementsDoc& d) {
  d.id = j.value("id", std::string{});
  d.title = j.value("title", std::string{});
  j.at("text").get_to(d.text);
}

inline void to_json(nlohmann::json& j, const Violation& v) {
  j = {{"code", v.code}, {"element_id", v.element_id}, {"message", v.message}};
}

// ---------------------------------------------------------------------------
// Validation

/// Ids double as PlantUML aliases, so they must be plain identifiers.
inline bool is_valid_id(std::string_view id) {
  if (id.empty()) return false;
  auto ident_start = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; };
  if (!ident_start(id.front())) return false;
  return std::all_of(id.begin(), id.end(),
                     [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

/// Structural check of every model invariant. Duplicate edges are tolerated
/// here; normalize() removes them.
inline std::vector<Violation> validate_model(const UseCaseModel& model,
                                             std::optional<std::size_t> text_length = std::nullopt) {
  std::vector<Violation> out;
  auto add = [&](std::string code, std::string id, std::string msg) {
    out.push_back({std::move(code), std::move(id), std::move(msg)});
  };

  if (text::is_blank(model.system_name)) add("E-EMPTY-SYSTEM", "", "system name is empty");

  auto check_spans = [&](const std::vector<SourceSpan>& spans, const std::string& id) {
    for (const auto& s : spans) {
      if (s.start > s.end || (text_length && s.end > *text_length)) {
        add("E-BAD-SPAN", id, "source span [" + std::to_string(s.start) + ", " + std::to_string(s.end) +
                                  ") is outside the requirements text");
      }
    }
  };

  std::set<std::string> seen;  // actors and use cases share the alias namespace
  std::set<std::string> actor_ids;
  std::set<std::string> usecase_ids;
  for (const auto& a : model.actors) {
    if (!is_valid_id(a.id)) add("E-BAD-ID", a.id, "actor id '" + a.id + "' is not a valid identifier");
    if (!seen.insert(a.id).second) add("E-DUP-ID", a.id, "duplicate id '" + a.id + "'");
    if (text::is_blank(a.name)) add("E-EMPTY-NAME", a.id, "actor name is empty");
    check_spans(a.source_spans, a.id);
    actor_ids.insert(a.id);
  }
  for (const auto& u : model.use_cases) {
    if (!is_valid_id(u.id)) add("E-BAD-ID", u.id, "use case id '" + u.id + "' is not a valid identifier");
    if (!seen.insert(u.id).second) add("E-DUP-ID", u.id, "duplicate id '" + u.id + "'");
    if (text::is_blank(u.title)) add("E-EMPTY-NAME", u.id, "use case title is empty");
    check_spans(u.source_spans, u.id);
    usecase_ids.insert(u.id);
  }

  for (const auto& e : model.associations) {
    if (!actor_ids.count(e.actor_id)) {
      add("E-REF-ACTOR", e.actor_id, "association references unknown actor '" + e.actor_id + "'");
    }
    if (!usecase_ids.count(e.usecase_id)) {
      add("E-REF-USECASE", e.usecase_id, "association references unknown use case '" + e.usecase_id + "'");
    }
  }

  for (const auto& u : model.use_cases) {
    std::set<std::string> linked(u.actor_ids.begin(), u.actor_ids.end());
    for (const auto& id : linked) {
      if (!actor_ids.count(id)) add("E-REF-ACTOR", u.id, "use case '" + u.id + "' references unknown actor '" + id + "'");
    }
    std::set<std::string> via_edges;
    for (const auto& e : model.associations) {
      if (e.usecase_id == u.id) via_edges.insert(e.actor_id);
    }
    if (linked != via_edges) {
      add("E-LINK-MISMATCH", u.id, "actor_ids of '" + u.id + "' disagree with its associations");
    }
  }

  for (const auto& r : model.relations) {
    if (!usecase_ids.count(r.from_id)) add("E-REF-USECASE", r.from_id, "relation references unknown use case '" + r.from_id + "'");
    if (!usecase_ids.count(r.to_id)) add("E-REF-USECASE", r.to_id, "relation references unknown use case '" + r.to_id + "'");
    if (r.from_id == r.to_id) add("E-SELF-RELATION", r.from_id, "relation from '" + r.from_id + "' to itself");
  }
  return out;
}

inline void require_valid(const UseCaseModel& model) {
  auto violations = validate_model(model);
  if (!violations.empty()) {
    throw Error("E-INVALID-MODEL", violations.front().code + ": " + violations.front().message,
                nlohmann::json{{"violations", violations}});
  }
}

inline std::vector<Violation> validate_description(const UseCaseDescription& d, const UseCaseModel& model) {
  std::vector<Violation> out;
  if (!model.find_use_case(d.usecase_id)) {
    out.push_back({"E-REF-USECASE", d.usecase_id, "description for unknown use case '" + d.usecase_id + "'"});
  }
  bool has_step = std::any_of(d.main_flow.begin(), d.main_flow.end(), [](const auto& s) { return !text::is_blank(s); });
  if (!has_step) out.push_back({"E-EMPTY-FLOW", d.usecase_id, "main flow has no steps"});
  return out;
}

// ---------------------------------------------------------------------------
// Canonical form

template <typename T>
void sort_unique(std::vector<T>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

inline UseCaseModel normalize(UseCaseModel model) {
  require_valid(model);

  model.system_name = text::collapse_whitespace(model.system_name);
  for (auto& a : model.actors) a.name = text::collapse_whitespace(a.name);
  for (auto& u : model.use_cases) {
    u.title = text::collapse_whitespace(u.title);
    sort_unique(u.actor_ids);
  }

  std::sort(model.actors.begin(), model.actors.end(),
            [](const Actor& l, const Actor& r) { return std::tie(l.name, l.id) < std::tie(r.name, r.id); });
  std::sort(model.use_cases.begin(), model.use_cases.end(),
            [](const UseCase& l, const UseCase& r) { return std::tie(l.title, l.id) < std::tie(r.title, r.id); });
  sort_unique(model.associations);
  sort_unique(model.relations);
  return model;
}

}  // namespace ucm
