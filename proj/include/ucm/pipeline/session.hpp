#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ucm/core/model.hpp"
#include "ucm/error.hpp"

namespace ucm::pipeline {

enum class Stage {
  created,
  actors_proposed,
  actors_confirmed,
  usecases_proposed,
  usecases_confirmed,
  model_proposed,
  model_confirmed,
  descriptions_done
};

NLOHMANN_JSON_SERIALIZE_ENUM(Stage, {{Stage::created, "created"},
                                     {Stage::actors_proposed, "actors_proposed"},
                                     {Stage::actors_confirmed, "actors_confirmed"},
                                     {Stage::usecases_proposed, "usecases_proposed"},
                                     {Stage::usecases_confirmed, "usecases_confirmed"},
                                     {Stage::model_proposed, "model_proposed"},
                                     {Stage::model_confirmed, "model_confirmed"},
                                     {Stage::descriptions_done, "descriptions_done"}})

inline std::string stage_name(Stage s) { return nlohmann::json(s).get<std::string>(); }

/// The four workflow steps, used for edits, timers and stage runs.
enum class Step { actors, usecases, model, descriptions };

NLOHMANN_JSON_SERIALIZE_ENUM(Step, {{Step::actors, "actors"},
                                    {Step::usecases, "usecases"},
                                    {Step::model, "model"},
                                    {Step::descriptions, "descriptions"}})

inline std::string step_name(Step s) { return nlohmann::json(s).get<std::string>(); }

inline std::optional<Step> parse_step(std::string_view name) {
  if (name == "actors") return Step::actors;
  if (name == "usecases") return Step::usecases;
  if (name == "model") return Step::model;
  if (name == "descriptions") return Step::descriptions;
  return std::nullopt;
}

enum class EditKind { add, remove, rename, relink };

NLOHMANN_JSON_SERIALIZE_ENUM(EditKind, {{EditKind::add, "add"},
                                        {EditKind::remove, "remove"},
                                        {EditKind::rename, "rename"},
                                        {EditKind::relink, "relink"}})

struct Edit {
  Step stage = Step::actors;
  EditKind kind = EditKind::add;
  std::string target_id;  // filled with the new id for add edits once applied
  nlohmann::json payload = nlohmann::json::object();
  bool operator==(const Edit&) const = default;
};

inline void to_json(nlohmann::json& j, const Edit& e) {
  j = {{"stage", e.stage}, {"kind", e.kind}, {"target_id", e.target_id}, {"payload", e.payload}};
}

/// Strict reader: unknown stage or kind strings are rejected rather than
/// mapped to a default.
inline void from_json(const nlohmann::json& j, Edit& e) {
  if (!j.is_object()) throw Error("E-BAD-EDIT", "an edit must be a JSON object");
  auto stage = parse_step(j.value("stage", std::string{}));
  if (!stage) throw Error("E-BAD-EDIT", "edit stage must be one of actors, usecases, model");
  e.stage = *stage;
  const std::string kind = j.value("kind", std::string{});
  if (kind == "add") {
    e.kind = EditKind::add;
  } else if (kind == "remove") {
    e.kind = EditKind::remove;
  } else if (kind == "rename") {
    e.kind = EditKind::rename;
  } else if (kind == "relink") {
    e.kind = EditKind::relink;
  } else {
    throw Error("E-BAD-EDIT", "edit kind must be one of add, remove, rename, relink");
  }
  if (j.contains("target_id") && !j.at("target_id").is_string()) throw Error("E-BAD-EDIT", "target_id must be a string");
  e.target_id = j.value("target_id", std::string{});
  e.payload = j.value("payload", nlohmann::json::object());
  if (!e.payload.is_object()) throw Error("E-BAD-EDIT", "edit payload must be an object");
}

struct TimingRecord {
  Step label = Step::actors;  // "total" is serialized separately
  std::int64_t started_at = 0;  // epoch milliseconds
  std::optional<std::int64_t> ended_at;

  std::optional<double> minutes() const {
    if (!ended_at) return std::nullopt;
    return static_cast<double>(*ended_at - started_at) / 60000.0;
  }
  bool operator==(const TimingRecord&) const = default;
};

/// Something the user should look at: a dropped LLM entry, an orphaned use
/// case, an element the model step had to add or remove.
struct Notice {
  std::string code;
  std::string element_id;
  std::string message;
  bool operator==(const Notice&) const = default;
};

inline void to_json(nlohmann::json& j, const Notice& n) {
  j = {{"code", n.code}, {"element_id", n.element_id}, {"message", n.message}};
}
inline void from_json(const nlohmann::json& j, Notice& n) {
  j.at("code").get_to(n.code);
  n.element_id = j.value("element_id", std::string{});
  n.message = j.value("message", std::string{});
}

struct Warning {
  Step stage = Step::actors;
  std::string code;
  std::string element_id;
  std::string message;
  bool operator==(const Warning&) const = default;
};

inline void to_json(nlohmann::json& j, const Warning& w) {
  j = {{"stage", w.stage}, {"code", w.code}, {"element_id", w.element_id}, {"message", w.message}};
}
inline void from_json(const nlohmann::json& j, Warning& w) {
  j.at("stage").get_to(w.stage);
  j.at("code").get_to(w.code);
  w.element_id = j.value("element_id", std::string{});
  w.message = j.value("message", std::string{});
}

struct Repair {
  Step stage = Step::actors;
  std::string error_code;
  std::string message;
  bool operator==(const Repair&) const = default;
};

/// One LLM stage run and the ids it introduced.
struct Proposal {
  Step stage = Step::actors;
  int run = 0;
  std::vector<std::string> element_ids;
  bool operator==(const Proposal&) const = default;
};

struct Session {
  std::string id;
  RequirementsDoc requirements;
  Stage stage = Stage::created;
  std::vector<Actor> proposed_actors;
  std::vector<Actor> confirmed_actors;
  std::vector<UseCase> proposed_usecases;
  std::vector<UseCase> confirmed_usecases;
  std::optional<std::string> model_source;
  std::optional<UseCaseModel> model;
  std::vector<UseCaseDescription> descriptions;
  std::vector<Edit> edit_log;
  std::vector<TimingRecord> timings;
  std::vector<Warning> warnings;  // replaced whenever the step is re-run
  std::vector<Notice> flags;
  std::vector<Repair> repairs;
  std::vector<Proposal> proposals;
  int next_actor = 1;
  int next_usecase = 1;

  bool operator==(const Session&) const = default;
};

inline void to_json(nlohmann::json& j, const TimingRecord& t) {
  j = {{"label", t.label}, {"started_at", t.started_at}};
  j["ended_at"] = t.ended_at ? nlohmann::json(*t.ended_at) : nlohmann::json();
  j["minutes"] = t.minutes() ? nlohmann::json(*t.minutes()) : nlohmann::json();
}
inline void from_json(const nlohmann::json& j, TimingRecord& t) {
  j.at("label").get_to(t.label);
  j.at("started_at").get_to(t.started_at);
  if (j.contains("ended_at") && !j.at("ended_at").is_null()) t.ended_at = j.at("ended_at").get<std::int64_t>();
}

inline void to_json(nlohmann::json& j, const Repair& r) {
  j = {{"stage", r.stage}, {"error_code", r.error_code}, {"message", r.message}};
}
inline void from_json(const nlohmann::json& j, Repair& r) {
  j.at("stage").get_to(r.stage);
  j.at("error_code").get_to(r.error_code);
  r.message = j.value("message", std::string{});
}

inline void to_json(nlohmann::json& j, const Proposal& p) {
  j = {{"stage", p.stage}, {"run", p.run}, {"element_ids", p.element_ids}};
}
inline void from_json(const nlohmann::json& j, Proposal& p) {
  j.at("stage").get_to(p.stage);
  j.at("run").get_to(p.run);
  j.at("element_ids").get_to(p.element_ids);
}

/// Totals over the closed per-step timers: earliest start, latest end, summed
/// minutes. Absent until some step has been timed.
inline nlohmann::json total_timing(const std::vector<TimingRecord>& timings) {
  if (timings.empty()) return nullptr;
  std::int64_t start = timings.front().started_at;
  std::optional<std::int64_t> end;
  double minutes = 0.0;
  for (const auto& t : timings) {
    start = std::min(start, t.started_at);
    if (t.ended_at) {
      end = end ? std::max(*end, *t.ended_at) : *t.ended_at;
      minutes += *t.minutes();
    }
  }
  nlohmann::json j = {{"label", "total"}, {"started_at", start}, {"minutes", minutes}};
  j["ended_at"] = end ? nlohmann::json(*end) : nlohmann::json();
  return j;
}

inline void to_json(nlohmann::json& j, const Session& s) {
  auto timings = nlohmann::json::array();
  for (const auto& t : s.timings) timings.push_back(t);
  if (auto total = total_timing(s.timings); !total.is_null()) timings.push_back(total);

  j = {{"id", s.id},
       {"requirements", s.requirements},
       {"stage", s.stage},
       {"proposed_actors", s.proposed_actors},
       {"confirmed_actors", s.confirmed_actors},
       {"proposed_usecases", s.proposed_usecases},
       {"confirmed_usecases", s.confirmed_usecases},
       {"descriptions", s.descriptions},
       {"edit_log", s.edit_log},
       {"timings", timings},
       {"warnings", s.warnings},
       {"flags", s.flags},
       {"repairs", s.repairs},
       {"proposals", s.proposals},
       {"next_ids", {{"actor", s.next_actor}, {"usecase", s.next_usecase}}}};
  j["model_source"] = s.model_source ? nlohmann::json(*s.model_source) : nlohmann::json();
  j["model"] = s.model ? nlohmann::json(*s.model) : nlohmann::json();
}

inline void from_json(const nlohmann::json& j, Session& s) {
  j.at("id").get_to(s.id);
  j.at("requirements").get_to(s.requirements);
  j.at("stage").get_to(s.stage);
  j.at("proposed_actors").get_to(s.proposed_actors);
  j.at("confirmed_actors").get_to(s.confirmed_actors);
  j.at("proposed_usecases").get_to(s.proposed_usecases);
  j.at("confirmed_usecases").get_to(s.confirmed_usecases);
  j.at("descriptions").get_to(s.descriptions);
  j.at("edit_log").get_to(s.edit_log);
  s.timings.clear();
  for (const auto& t : j.at("timings")) {
    if (t.at("label") != "total") s.timings.push_back(t.get<TimingRecord>());
  }
  j.at("warnings").get_to(s.warnings);
  j.at("flags").get_to(s.flags);
  j.at("repairs").get_to(s.repairs);
  j.at("proposals").get_to(s.proposals);
  s.next_actor = j.at("next_ids").at("actor").get<int>();
  s.next_usecase = j.at("next_ids").at("usecase").get<int>();
  s.model_source.reset();
  if (!j.at("model_source").is_null()) s.model_source = j.at("model_source").get<std::string>();
  s.model.reset();
  if (!j.at("model").is_null()) s.model = j.at("model").get<UseCaseModel>();
}

}  // namespace ucm::pipeline
