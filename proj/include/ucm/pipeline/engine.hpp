#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <type_traits>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ucm/core/model.hpp"
#include "ucm/core/text.hpp"
#include "ucm/error.hpp"
#include "ucm/eval/align.hpp"
#include "ucm/llm/extract.hpp"
#include "ucm/llm/provider.hpp"
#include "ucm/llm/template.hpp"
#include "ucm/pipeline/session.hpp"
#include "ucm/plantuml/lint.hpp"
#include "ucm/plantuml/parse.hpp"
#include "ucm/plantuml/render.hpp"
#include "ucm/plantuml/scan.hpp"

namespace ucm::pipeline {

using Clock = std::function<std::int64_t()>;
using IdGenerator = std::function<std::string()>;

inline Clock system_clock_ms() {
  return [] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
  };
}

/// A clock that starts at `start` and advances by `step` milliseconds on
/// every reading.
inline Clock stepping_clock(std::int64_t start, std::int64_t step) {
  auto now = std::make_shared<std::atomic<std::int64_t>>(start);
  return [now, step] { return now->fetch_add(step); };
}

inline IdGenerator random_ids() {
  auto state = std::make_shared<std::pair<std::mutex, std::mt19937_64>>();
  state->second.seed(std::random_device{}());
  return [state] {
    std::lock_guard lock(state->first);
    static constexpr char hex[] = "0123456789abcdef";
    std::string id(16, '0');
    auto v = state->second();
    for (auto& c : id) {
      c = hex[v & 0xf];
      v >>= 4;
    }
    return id;
  };
}

inline IdGenerator counter_ids(std::string prefix) {
  auto n = std::make_shared<std::atomic<int>>(0);
  return [n, prefix] { return prefix + std::to_string(++*n); };
}

struct EngineConfig {
  llm::TemplateSet templates = llm::builtin_templates();
  llm::RenderOptions render;
  Clock clock;
  IdGenerator ids;
};

enum class ExportFormat { puml, json };

/// Serialized session or rendered diagram. JSON keys are sorted, so equal
/// sessions export to equal bytes.
inline std::string export_session(const Session& s, ExportFormat format) {
  if (format == ExportFormat::puml) {
    if (!s.model) throw Error("E-NO-MODEL", "the session has no model yet", {{"stage", stage_name(s.stage)}});
    return plantuml::render_model(*s.model).text;
  }
  return nlohmann::json(s).dump(2) + "\n";
}

namespace detail {

inline bool repairable(const std::string& code) {
  static const std::set<std::string> codes{"E-NO-BLOCK", "E-MALFORMED", "E-SCHEMA", "E-SYNTAX",
                                           "E-UNDEF-REF", "E-NO-START", "E-NO-END", "E-LINT"};
  return codes.count(code) > 0;
}

inline std::string describe_problem(const Error& e) {
  std::string out = e.code() + ": " + e.what();
  if (e.details().contains("findings")) {
    for (const auto& f : e.details().at("findings")) {
      out += "\n- line " + std::to_string(f.at("line").get<int>()) + ": " + f.at("code").get<std::string>() + " " +
             f.at("message").get<std::string>();
    }
  }
  return out;
}

inline std::string repair_message(const Error& e, const std::string& previous_reply) {
  return "Your previous answer could not be used.\n\nProblem:\n" + describe_problem(e) +
         "\n\nYour previous answer was:\n" + previous_reply +
         "\n\nAnswer the original request again. Fix the problem and follow the required output format exactly.";
}

inline std::optional<SourceSpan> find_span(const std::string& text, const std::string& needle) {
  if (text::is_blank(needle)) return std::nullopt;
  auto pos = text.find(needle);
  if (pos == std::string::npos) pos = text::to_lower(text).find(text::to_lower(needle));
  if (pos == std::string::npos) return std::nullopt;
  return SourceSpan{pos, pos + needle.size()};
}

inline std::vector<SourceSpan> spans_for(const std::string& text, const std::string& evidence, const std::string& name) {
  if (auto s = find_span(text, evidence)) return {*s};
  if (auto s = find_span(text, name)) return {*s};
  return {};
}

inline std::string string_field(const nlohmann::json& obj, const char* key) {
  if (!obj.contains(key) || obj.at(key).is_null()) return {};
  if (!obj.at(key).is_string()) throw Error("E-SCHEMA", std::string("field '") + key + "' must be a string");
  return obj.at(key).get<std::string>();
}

inline const nlohmann::json& json_array(const nlohmann::json& data, const std::string& what) {
  if (!data.is_array()) throw Error("E-SCHEMA", "expected a JSON array of " + what);
  return data;
}

inline std::vector<std::string> string_list(const nlohmann::json& obj, const char* key) {
  std::vector<std::string> out;
  if (!obj.contains(key) || obj.at(key).is_null()) return out;
  const auto& v = obj.at(key);
  if (v.is_string()) return {v.get<std::string>()};
  if (!v.is_array()) throw Error("E-SCHEMA", std::string("field '") + key + "' must be a list of strings");
  for (const auto& item : v) {
    if (!item.is_string()) throw Error("E-SCHEMA", std::string("field '") + key + "' must be a list of strings");
    out.push_back(item.get<std::string>());
  }
  return out;
}

inline void start_timer(Session& s, Step step, std::int64_t now) {
  for (const auto& t : s.timings) {
    if (t.label == step) return;
  }
  s.timings.push_back({step, now, std::nullopt});
}

inline void stop_timer(Session& s, Step step, std::int64_t now) {
  for (auto& t : s.timings) {
    if (t.label == step) t.ended_at = std::max(now, t.started_at);
  }
}

inline void clear_warnings(Session& s, Step step) {
  std::erase_if(s.warnings, [&](const Warning& w) { return w.stage == step; });
}

/// The use cases the user is currently working with.
inline std::vector<UseCase>* current_usecases(Session& s) {
  if (s.model) return &s.model->use_cases;
  if (s.stage >= Stage::usecases_confirmed) return &s.confirmed_usecases;
  return &s.proposed_usecases;
}

inline void refresh_orphan_flags(Session& s) {
  std::erase_if(s.flags, [](const Notice& n) { return n.code == "F-ORPHANED"; });
  for (const auto& uc : *current_usecases(s)) {
    if (uc.actor_ids.empty()) {
      s.flags.push_back({"F-ORPHANED", uc.id, "use case '" + uc.title + "' has no actor"});
    }
  }
}

inline void rebuild_associations(UseCaseModel& m) {
  m.associations.clear();
  for (const auto& uc : m.use_cases) {
    for (const auto& a : uc.actor_ids) m.associations.push_back({a, uc.id});
  }
}

inline std::string actor_lines(const std::vector<Actor>& actors, bool with_ids) {
  std::string out;
  for (const auto& a : actors) {
    if (!out.empty()) out += "\n";
    out += with_ids ? "- " + a.id + ": " + a.name + " (" + std::string(to_string(a.kind)) + ")" : "- " + a.name;
  }
  return out;
}

inline std::string usecase_lines(const std::vector<UseCase>& ucs) {
  std::string out;
  for (const auto& uc : ucs) {
    if (!out.empty()) out += "\n";
    out += "- " + uc.id + ": " + uc.title + " (actors: ";
    for (std::size_t i = 0; i < uc.actor_ids.size(); ++i) out += (i ? ", " : "") + uc.actor_ids[i];
    out += ")";
  }
  return out;
}

}  // namespace detail

/// The workflow engine. It holds configuration only; every operation works
/// on a caller-owned Session, and failed operations leave it unchanged.
class Engine {
 public:
  explicit Engine(std::shared_ptr<llm::Provider> provider, EngineConfig cfg = {})
      : provider_(std::move(provider)), cfg_(std::move(cfg)) {
    if (!cfg_.clock) cfg_.clock = system_clock_ms();
    if (!cfg_.ids) cfg_.ids = random_ids();
  }

  const EngineConfig& config() const { return cfg_; }

  Session start_session(RequirementsDoc doc) const {
    if (text::is_blank(doc.text)) throw Error("E-EMPTY-REQUIREMENTS", "the requirements text is empty");
    Session s;
    s.id = cfg_.ids();
    if (doc.id.empty()) doc.id = s.id;
    doc.title = text::collapse_whitespace(doc.title);
    s.requirements = std::move(doc);
    return s;
  }

  std::vector<Actor> run_actor_stage(Session& session) const {
    require_stage(session, {Stage::created, Stage::actors_proposed}, "run actors");
    Session s = session;
    detail::start_timer(s, Step::actors, cfg_.clock());
    detail::clear_warnings(s, Step::actors);

    auto req = render("actor_extraction", {{"requirements", s.requirements.text}});
    auto entries = complete_with_repair(s, Step::actors, req, [](const std::string& reply) {
      auto block = llm::extract_structured_block(reply, llm::BlockFormat::json);
      const auto& arr = detail::json_array(block.data, "actors");
      std::vector<std::tuple<std::string, std::string, std::string>> out;  // name, kind, evidence
      for (const auto& e : arr) {
        if (e.is_string()) {
          out.emplace_back(e.get<std::string>(), "", "");
        } else if (e.is_object()) {
          out.emplace_back(detail::string_field(e, "name"), detail::string_field(e, "kind"), detail::string_field(e, "evidence"));
        } else {
          throw Error("E-SCHEMA", "each actor must be a name or an object with a name");
        }
      }
      return out;
    });

    std::vector<Actor> actors;
    std::set<std::string> seen;
    Proposal proposal{Step::actors, next_run(s, Step::actors), {}};
    for (const auto& [raw_name, kind, evidence] : entries) {
      const std::string name = text::collapse_whitespace(raw_name);
      if (name.empty()) {
        s.warnings.push_back({Step::actors, "W-EMPTY-NAME", "", "dropped an actor without a name"});
        continue;
      }
      if (!seen.insert(eval::normalize_name(name)).second) {
        s.warnings.push_back({Step::actors, "W-DUPLICATE", "", "dropped duplicate actor '" + name + "'"});
        continue;
      }
      Actor a;
      a.id = "A" + std::to_string(s.next_actor++);
      a.name = name;
      a.kind = kind.empty() ? ActorKind::human : plantuml::ast::actor_kind_from_stereotype(kind);
      a.source_spans = detail::spans_for(s.requirements.text, evidence, name);
      proposal.element_ids.push_back(a.id);
      actors.push_back(std::move(a));
    }
    if (actors.empty()) s.warnings.push_back({Step::actors, "W-EMPTY-STAGE", "", "no actors were proposed"});
    s.proposals.push_back(std::move(proposal));
    s.proposed_actors = actors;
    s.stage = Stage::actors_proposed;
    session = std::move(s);
    return actors;
  }

  std::vector<UseCase> run_usecase_stage(Session& session) const {
    require_stage(session, {Stage::actors_confirmed, Stage::usecases_proposed}, "run usecases");
    Session s = session;
    detail::start_timer(s, Step::usecases, cfg_.clock());
    detail::clear_warnings(s, Step::usecases);

    auto req = render("usecase_extraction",
                      {{"requirements", s.requirements.text}, {"actors", detail::actor_lines(s.confirmed_actors, false)}});
    auto entries = complete_with_repair(s, Step::usecases, req, [](const std::string& reply) {
      auto block = llm::extract_structured_block(reply, llm::BlockFormat::json);
      const auto& arr = detail::json_array(block.data, "use cases");
      std::vector<std::tuple<std::string, std::vector<std::string>, std::string>> out;  // title, actors, evidence
      for (const auto& e : arr) {
        if (!e.is_object()) throw Error("E-SCHEMA", "each use case must be an object with a title and actors");
        auto actors = detail::string_list(e, "actors");
        if (actors.empty()) actors = detail::string_list(e, "actor");
        out.emplace_back(detail::string_field(e, "title"), std::move(actors), detail::string_field(e, "evidence"));
      }
      return out;
    });

    std::map<std::string, std::string> actor_by_name;
    for (const auto& a : s.confirmed_actors) actor_by_name.emplace(eval::normalize_name(a.name), a.id);

    std::vector<UseCase> ucs;
    std::map<std::string, std::size_t> by_title;
    Proposal proposal{Step::usecases, next_run(s, Step::usecases), {}};
    for (const auto& [raw_title, actor_names, evidence] : entries) {
      const std::string title = text::collapse_whitespace(raw_title);
      if (title.empty()) {
        s.warnings.push_back({Step::usecases, "W-EMPTY-NAME", "", "dropped a use case without a title"});
        continue;
      }
      std::vector<std::string> ids, unknown;
      for (const auto& n : actor_names) {
        auto it = actor_by_name.find(eval::normalize_name(n));
        if (it != actor_by_name.end()) {
          ids.push_back(it->second);
        } else {
          unknown.push_back(text::collapse_whitespace(n));
        }
      }
      sort_unique(ids);
      std::string unknown_list;
      for (const auto& u : unknown) unknown_list += (unknown_list.empty() ? "'" : ", '") + u + "'";
      if (ids.empty()) {
        s.warnings.push_back({Step::usecases, "W-UNKNOWN-ACTOR", "",
                              "dropped use case '" + title + "': it names no confirmed actor" +
                                  (unknown.empty() ? std::string() : " (only " + unknown_list + ")")});
        continue;
      }
      const std::string key = eval::normalize_name(title);
      if (auto it = by_title.find(key); it != by_title.end()) {
        auto& existing = ucs[it->second];
        existing.actor_ids.insert(existing.actor_ids.end(), ids.begin(), ids.end());
        sort_unique(existing.actor_ids);
        s.warnings.push_back({Step::usecases, "W-DUPLICATE", existing.id, "merged duplicate use case '" + title + "'"});
        continue;
      }
      UseCase uc;
      uc.id = "UC" + std::to_string(s.next_usecase++);
      uc.title = title;
      uc.actor_ids = std::move(ids);
      uc.source_spans = detail::spans_for(s.requirements.text, evidence, title);
      if (!unknown.empty()) {
        s.warnings.push_back({Step::usecases, "W-UNKNOWN-ACTOR", uc.id, "ignored unknown actors " + unknown_list + " of '" + title + "'"});
      }
      by_title.emplace(key, ucs.size());
      proposal.element_ids.push_back(uc.id);
      ucs.push_back(std::move(uc));
    }
    if (ucs.empty()) s.warnings.push_back({Step::usecases, "W-EMPTY-STAGE", "", "no use cases were proposed"});
    s.proposals.push_back(std::move(proposal));
    s.proposed_usecases = ucs;
    s.stage = Stage::usecases_proposed;
    detail::refresh_orphan_flags(s);
    session = std::move(s);
    return ucs;
  }

  std::pair<plantuml::DiagramSource, UseCaseModel> run_model_stage(Session& session) const {
    require_stage(session, {Stage::usecases_confirmed, Stage::model_proposed}, "run model");
    Session s = session;
    detail::start_timer(s, Step::model, cfg_.clock());
    detail::clear_warnings(s, Step::model);
    std::erase_if(s.flags, [](const Notice& n) { return n.code != "F-ORPHANED"; });

    const std::string system_name = s.requirements.title.empty() ? std::string("System") : s.requirements.title;
    auto req = render("model_generation", {{"system_name", system_name},
                                           {"actors", detail::actor_lines(s.confirmed_actors, true)},
                                           {"use_cases", detail::usecase_lines(s.confirmed_usecases)}});
    auto parsed = complete_with_repair(s, Step::model, req, [](const std::string& reply) {
      auto block = llm::extract_structured_block(reply, llm::BlockFormat::plantuml);
      auto findings = plantuml::lint(block.text);
      if (plantuml::has_errors(findings)) {
        std::vector<plantuml::LintFinding> errors;
        for (const auto& f : findings) {
          if (f.severity == plantuml::Severity::error) errors.push_back(f);
        }
        throw Error("E-LINT", "the diagram has " + std::to_string(errors.size()) + " lint error(s)", {{"findings", errors}});
      }
      return plantuml::parse_model(block.text);
    });

    UseCaseModel model = reconcile(s, parsed, system_name);
    plantuml::DiagramSource source = plantuml::render_model(model);
    for (const auto& f : plantuml::lint(source)) {
      s.warnings.push_back({Step::model, f.code, "", f.message});
    }
    s.model_source = source.text;
    s.model = model;
    s.stage = Stage::model_proposed;
    detail::refresh_orphan_flags(s);
    session = std::move(s);
    return {source, model};
  }

  std::vector<UseCaseDescription> run_description_stage(Session& session, const std::vector<std::string>& usecase_ids) const {
    require_stage(session, {Stage::model_confirmed, Stage::descriptions_done}, "run descriptions");
    for (const auto& id : usecase_ids) {
      if (!session.model->find_use_case(id)) {
        throw Error("E-UNKNOWN-USECASE", "use case '" + id + "' is not in the model", {{"usecase_id", id}});
      }
    }
    Session s = session;
    detail::start_timer(s, Step::descriptions, cfg_.clock());
    detail::clear_warnings(s, Step::descriptions);

    std::vector<UseCaseDescription> out;
    for (const auto& id : usecase_ids) {
      const UseCase& uc = *s.model->find_use_case(id);
      std::string actors;
      for (const auto& aid : uc.actor_ids) {
        if (const Actor* a = s.model->find_actor(aid)) actors += (actors.empty() ? "" : ", ") + a->name;
      }
      if (actors.empty()) actors = "none";
      auto req = render("description_generation", {{"usecase_id", uc.id},
                                                    {"usecase_title", uc.title},
                                                    {"actors", actors},
                                                    {"requirements", s.requirements.text}});
      auto d = complete_with_repair(s, Step::descriptions, req, [&](const std::string& reply) {
        auto block = llm::extract_structured_block(reply, llm::BlockFormat::json);
        if (!block.data.is_object()) throw Error("E-SCHEMA", "expected a JSON object describing the use case");
        UseCaseDescription desc;
        desc.usecase_id = id;
        desc.preconditions = detail::string_list(block.data, "preconditions");
        desc.main_flow = detail::string_list(block.data, "main_flow");
        desc.postconditions = detail::string_list(block.data, "postconditions");
        if (block.data.contains("alternative_flows")) {
          const auto& alts = block.data.at("alternative_flows");
          if (!alts.is_array()) throw Error("E-SCHEMA", "alternative_flows must be a list");
          for (const auto& alt : alts) {
            if (!alt.is_object()) throw Error("E-SCHEMA", "each alternative flow must be an object");
            desc.alternative_flows.push_back({detail::string_field(alt, "label"), detail::string_list(alt, "steps")});
          }
        }
        std::erase_if(desc.main_flow, [](const std::string& step) { return text::is_blank(step); });
        if (desc.main_flow.empty()) throw Error("E-SCHEMA", "main_flow must list at least one step");
        return desc;
      });
      auto it = std::find_if(s.descriptions.begin(), s.descriptions.end(),
                             [&](const UseCaseDescription& x) { return x.usecase_id == id; });
      if (it != s.descriptions.end()) {
        *it = d;
      } else {
        s.descriptions.push_back(d);
      }
      out.push_back(std::move(d));
    }
    s.stage = Stage::descriptions_done;
    detail::stop_timer(s, Step::descriptions, cfg_.clock());
    session = std::move(s);
    return out;
  }

  /// Moves a *_proposed stage to its *_confirmed successor.
  void confirm(Session& session) const {
    Session s = session;
    switch (s.stage) {
      case Stage::actors_proposed:
        if (s.proposed_actors.empty()) throw Error("E-NOTHING-TO-CONFIRM", "there are no actors to confirm");
        s.confirmed_actors = s.proposed_actors;
        s.stage = Stage::actors_confirmed;
        detail::stop_timer(s, Step::actors, cfg_.clock());
        break;
      case Stage::usecases_proposed:
        if (s.proposed_usecases.empty()) throw Error("E-NOTHING-TO-CONFIRM", "there are no use cases to confirm");
        s.confirmed_usecases = s.proposed_usecases;
        s.stage = Stage::usecases_confirmed;
        detail::stop_timer(s, Step::usecases, cfg_.clock());
        break;
      case Stage::model_proposed:
        require_valid(*s.model);
        s.stage = Stage::model_confirmed;
        detail::stop_timer(s, Step::model, cfg_.clock());
        break;
      default:
        throw stage_error(s, "confirm");
    }
    detail::refresh_orphan_flags(s);
    session = std::move(s);
  }

  /// Applies edits in order; all or nothing.
  void apply_edits(Session& session, const std::vector<Edit>& edits) const {
    Session s = session;
    for (Edit e : edits) {
      apply_one(s, e);
      s.edit_log.push_back(std::move(e));
      detail::refresh_orphan_flags(s);
    }
    session = std::move(s);
  }

 private:
  static Error stage_error(const Session& s, const std::string& action) {
    return Error("E-STAGE-ORDER", "cannot " + action + " while the session is in stage " + stage_name(s.stage),
                 {{"stage", stage_name(s.stage)}, {"action", action}});
  }

  static void require_stage(const Session& s, std::initializer_list<Stage> allowed, const std::string& action) {
    if (std::find(allowed.begin(), allowed.end(), s.stage) == allowed.end()) throw stage_error(s, action);
  }

  static int next_run(const Session& s, Step step) {
    return 1 + static_cast<int>(std::count_if(s.proposals.begin(), s.proposals.end(), [&](const Proposal& p) { return p.stage == step; }));
  }

  llm::CompletionRequest render(const std::string& template_id, const std::map<std::string, std::string>& vars) const {
    return llm::render_prompt(llm::get_template(cfg_.templates, template_id), vars, cfg_.render);
  }

  /// Sends the request and interprets the reply. A reply that cannot be
  /// interpreted earns exactly one corrective follow-up.
  template <typename Interpret>
  auto complete_with_repair(Session& s, Step step, const llm::CompletionRequest& req, Interpret interpret) const
      -> std::invoke_result_t<Interpret, const std::string&> {
    const std::string first = llm::complete(*provider_, req).content;
    try {
      return interpret(first);
    } catch (const Error& e) {
      if (!detail::repairable(e.code())) throw;
      s.repairs.push_back({step, e.code(), e.what()});
      auto retry = req;
      retry.messages.push_back({llm::Role::user, detail::repair_message(e, first)});
      const std::string second = llm::complete(*provider_, retry).content;
      try {
        return interpret(second);
      } catch (const Error& e2) {
        if (!detail::repairable(e2.code())) throw;
        nlohmann::json details = {{"stage", step_name(step)}, {"first_error", e.to_json()}, {"final_error", e2.to_json()}};
        if (e2.details().contains("findings")) details["findings"] = e2.details().at("findings");
        throw Error("E-REPAIR-FAILED", "the " + step_name(step) + " step failed after one corrective retry: " + e2.what(),
                    details);
      }
    }
  }

  /// Maps the parsed diagram onto the confirmed elements by normalized name.
  /// Extras are dropped and flagged; confirmed elements the diagram lacks are
  /// added back and flagged.
  static UseCaseModel reconcile(Session& s, const UseCaseModel& parsed, const std::string& system_name) {
    std::map<std::string, std::string> actor_by_name, uc_by_name;
    for (const auto& a : s.confirmed_actors) actor_by_name.emplace(eval::normalize_name(a.name), a.id);
    for (const auto& u : s.confirmed_usecases) uc_by_name.emplace(eval::normalize_name(u.title), u.id);

    std::map<std::string, std::string> actor_map, uc_map;  // parsed id -> confirmed id
    std::set<std::string> seen_actors, seen_ucs;
    for (const auto& a : parsed.actors) {
      auto it = actor_by_name.find(eval::normalize_name(a.name));
      if (it == actor_by_name.end()) {
        s.flags.push_back({"F-UNMATCHED-ACTOR", a.id, "dropped actor '" + a.name + "' that is not among the confirmed actors"});
        continue;
      }
      actor_map[a.id] = it->second;
      seen_actors.insert(it->second);
    }
    for (const auto& u : parsed.use_cases) {
      auto it = uc_by_name.find(eval::normalize_name(u.title));
      if (it == uc_by_name.end()) {
        s.flags.push_back({"F-UNMATCHED-USECASE", u.id, "dropped use case '" + u.title + "' that is not among the confirmed use cases"});
        continue;
      }
      uc_map[u.id] = it->second;
      seen_ucs.insert(it->second);
    }

    UseCaseModel m;
    m.system_name = system_name;
    m.actors = s.confirmed_actors;
    m.use_cases = s.confirmed_usecases;
    for (const auto& a : m.actors) {
      if (!seen_actors.count(a.id)) s.flags.push_back({"F-MISSING-ACTOR", a.id, "the diagram lacked actor '" + a.name + "'; it was added"});
    }
    for (const auto& u : m.use_cases) {
      if (!seen_ucs.count(u.id)) s.flags.push_back({"F-MISSING-USECASE", u.id, "the diagram lacked use case '" + u.title + "'; it was added"});
    }
    for (const auto& assoc : parsed.associations) {
      auto a = actor_map.find(assoc.actor_id);
      auto u = uc_map.find(assoc.usecase_id);
      if (a == actor_map.end() || u == uc_map.end()) continue;
      auto* uc = const_cast<UseCase*>(m.find_use_case(u->second));
      if (std::find(uc->actor_ids.begin(), uc->actor_ids.end(), a->second) == uc->actor_ids.end()) {
        uc->actor_ids.push_back(a->second);
        s.warnings.push_back({Step::model, "W-NEW-ASSOCIATION", uc->id, "the diagram links '" + uc->title + "' to " + a->second});
      }
    }
    for (auto& uc : m.use_cases) sort_unique(uc.actor_ids);
    detail::rebuild_associations(m);
    for (const auto& r : parsed.relations) {
      auto f = uc_map.find(r.from_id);
      auto t = uc_map.find(r.to_id);
      if (f == uc_map.end() || t == uc_map.end() || f->second == t->second) continue;
      m.relations.push_back({f->second, t->second, r.kind});
    }
    return normalize(m);
  }

  // ---- edits ---------------------------------------------------------------

  static std::string payload_string(const Edit& e, std::initializer_list<const char*> keys) {
    for (const char* k : keys) {
      if (!e.payload.contains(k)) continue;
      if (!e.payload.at(k).is_string()) throw Error("E-BAD-EDIT", std::string("payload field '") + k + "' must be a string");
      return e.payload.at(k).get<std::string>();
    }
    return {};
  }

  static std::string required_name(const Edit& e, std::initializer_list<const char*> keys) {
    const std::string name = text::collapse_whitespace(payload_string(e, keys));
    if (name.empty()) throw Error("E-EMPTY-NAME", "a name must not be blank", {{"target_id", e.target_id}});
    return name;
  }

  static std::vector<std::string> payload_actor_ids(const Edit& e, const std::vector<Actor>& actors) {
    if (!e.payload.contains("actor_ids") || !e.payload.at("actor_ids").is_array()) {
      throw Error("E-BAD-EDIT", "payload needs an 'actor_ids' list");
    }
    std::vector<std::string> ids;
    for (const auto& v : e.payload.at("actor_ids")) {
      if (!v.is_string()) throw Error("E-BAD-EDIT", "actor_ids must be strings");
      const auto id = v.get<std::string>();
      if (std::none_of(actors.begin(), actors.end(), [&](const Actor& a) { return a.id == id; })) {
        throw Error("E-UNKNOWN-TARGET", "no actor with id '" + id + "'", {{"target_id", id}});
      }
      ids.push_back(id);
    }
    sort_unique(ids);
    if (ids.empty()) throw Error("E-BAD-EDIT", "a use case needs at least one actor");
    return ids;
  }

  template <typename T>
  static typename std::vector<T>::iterator find_target(std::vector<T>& items, const Edit& e) {
    auto it = std::find_if(items.begin(), items.end(), [&](const T& x) { return x.id == e.target_id; });
    if (it == items.end()) {
      throw Error("E-UNKNOWN-TARGET", "no element with id '" + e.target_id + "' at this stage", {{"target_id", e.target_id}});
    }
    return it;
  }

  template <typename T, typename NameOf>
  static void reject_duplicate(const std::vector<T>& items, const std::string& name, const std::string& except_id, NameOf name_of) {
    const auto key = eval::normalize_name(name);
    for (const auto& x : items) {
      if (x.id != except_id && eval::normalize_name(name_of(x)) == key) {
        throw Error("E-BAD-EDIT", "an element named '" + name + "' already exists (" + x.id + ")", {{"existing_id", x.id}});
      }
    }
  }

  static ActorKind payload_kind(const Edit& e) {
    const auto kind = payload_string(e, {"kind"});
    if (kind.empty()) return ActorKind::human;
    if (kind != "human" && kind != "external_system" && kind != "hardware") {
      throw Error("E-BAD-EDIT", "actor kind must be human, external_system or hardware");
    }
    return nlohmann::json(kind).get<ActorKind>();
  }

  static void edit_actor_list(Session& s, std::vector<Actor>& actors, Edit& e, std::vector<std::vector<UseCase>*> dependents) {
    auto name_of = [](const Actor& a) { return a.name; };
    switch (e.kind) {
      case EditKind::add: {
        Actor a;
        a.name = required_name(e, {"name"});
        reject_duplicate(actors, a.name, "", name_of);
        a.kind = payload_kind(e);
        a.id = "A" + std::to_string(s.next_actor++);
        e.target_id = a.id;
        actors.push_back(std::move(a));
        break;
      }
      case EditKind::remove: {
        actors.erase(find_target(actors, e));
        for (auto* ucs : dependents) {
          for (auto& uc : *ucs) std::erase(uc.actor_ids, e.target_id);
        }
        break;
      }
      case EditKind::rename: {
        auto it = find_target(actors, e);
        auto name = required_name(e, {"name"});
        reject_duplicate(actors, name, it->id, name_of);
        it->name = std::move(name);
        if (e.payload.contains("kind")) it->kind = payload_kind(e);
        break;
      }
      case EditKind::relink:
        throw Error("E-BAD-EDIT", "actors carry no links; relink a use case instead");
    }
  }

  static void edit_usecase_list(Session& s, std::vector<UseCase>& ucs, const std::vector<Actor>& actors, Edit& e) {
    auto title_of = [](const UseCase& u) { return u.title; };
    switch (e.kind) {
      case EditKind::add: {
        UseCase uc;
        uc.title = required_name(e, {"title", "name"});
        reject_duplicate(ucs, uc.title, "", title_of);
        uc.actor_ids = payload_actor_ids(e, actors);
        uc.id = "UC" + std::to_string(s.next_usecase++);
        e.target_id = uc.id;
        ucs.push_back(std::move(uc));
        break;
      }
      case EditKind::remove:
        ucs.erase(find_target(ucs, e));
        break;
      case EditKind::rename: {
        auto it = find_target(ucs, e);
        auto title = required_name(e, {"title", "name"});
        reject_duplicate(ucs, title, it->id, title_of);
        it->title = std::move(title);
        break;
      }
      case EditKind::relink:
        find_target(ucs, e)->actor_ids = payload_actor_ids(e, actors);
        break;
    }
  }

  static void apply_one(Session& s, Edit& e) {
    switch (e.stage) {
      case Step::actors: {
        require_stage(s, {Stage::actors_proposed, Stage::actors_confirmed, Stage::usecases_proposed, Stage::usecases_confirmed},
                      "edit actors");
        auto& actors = s.stage == Stage::actors_proposed ? s.proposed_actors : s.confirmed_actors;
        edit_actor_list(s, actors, e, {&s.proposed_usecases, &s.confirmed_usecases});
        break;
      }
      case Step::usecases: {
        require_stage(s, {Stage::usecases_proposed, Stage::usecases_confirmed}, "edit use cases");
        auto& ucs = s.stage == Stage::usecases_proposed ? s.proposed_usecases : s.confirmed_usecases;
        edit_usecase_list(s, ucs, s.confirmed_actors, e);
        break;
      }
      case Step::model: {
        require_stage(s, {Stage::model_proposed, Stage::model_confirmed}, "edit the model");
        UseCaseModel& m = *s.model;
        std::string element = payload_string(e, {"element"});
        if (e.kind != EditKind::add) {
          if (m.find_actor(e.target_id)) {
            element = "actor";
          } else if (m.find_use_case(e.target_id)) {
            element = "usecase";
          } else {
            throw Error("E-UNKNOWN-TARGET", "no model element with id '" + e.target_id + "'", {{"target_id", e.target_id}});
          }
        }
        if (element == "actor") {
          edit_actor_list(s, m.actors, e, {&m.use_cases});
        } else if (element == "usecase") {
          edit_usecase_list(s, m.use_cases, m.actors, e);
          if (e.kind == EditKind::remove) {
            std::erase_if(m.relations, [&](const UseCaseRelation& r) { return r.from_id == e.target_id || r.to_id == e.target_id; });
            std::erase_if(s.descriptions, [&](const UseCaseDescription& d) { return d.usecase_id == e.target_id; });
          }
        } else {
          throw Error("E-BAD-EDIT", "model additions need payload.element = \"actor\" or \"usecase\"");
        }
        detail::rebuild_associations(m);
        m = normalize(m);
        s.model_source = plantuml::render_model(m).text;
        break;
      }
      case Step::descriptions:
        throw Error("E-BAD-EDIT", "descriptions are regenerated, not edited");
    }
  }

  std::shared_ptr<llm::Provider> provider_;
  EngineConfig cfg_;
};

}  // namespace ucm::pipeline
