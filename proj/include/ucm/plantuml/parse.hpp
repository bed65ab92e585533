#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "ucm/core/model.hpp"
#include "ucm/error.hpp"
#include "ucm/plantuml/render.hpp"
#include "ucm/plantuml/scan.hpp"

namespace ucm::plantuml {

namespace detail {

inline std::string parse_error_code(ast::IssueKind kind) {
  switch (kind) {
    case ast::IssueKind::undefined_ref:
    case ast::IssueKind::dangling_relation: return "E-UNDEF-REF";
    default: return "E-SYNTAX";
  }
}

[[noreturn]] inline void throw_at(const std::string& code, int line, const std::string& message) {
  throw Error(code, "line " + std::to_string(line) + ": " + message, nlohmann::json{{"line", line}});
}

}  // namespace detail

/// Tolerant parse of LLM-produced source into a normalized model. Throws
/// E-NO-START, E-NO-END, E-UNDEF-REF or E-SYNTAX; when several problems exist
/// the one on the earliest line is reported.
inline UseCaseModel parse_model(const DiagramSource& src) {
  ast::Scanner scanner;
  const ast::ScanResult scan = scanner.scan(src.text);
  if (!scan.start_line) detail::throw_at("E-NO-START", 1, "missing @startuml");
  if (!scan.end_line) detail::throw_at("E-NO-END", std::max(scan.line_count, 1), "missing @enduml");

  const ast::Resolution res = ast::resolve(scan);

  std::vector<ast::Issue> issues = scan.issues;
  issues.insert(issues.end(), res.issues.begin(), res.issues.end());
  for (const auto& d : res.elements) {
    if (!is_valid_id(*d.alias)) {
      issues.push_back({ast::IssueKind::syntax, d.line, "alias '" + *d.alias + "' is not a valid identifier"});
    }
  }
  if (!issues.empty()) {
    auto first = std::min_element(issues.begin(), issues.end(),
                                  [](const ast::Issue& l, const ast::Issue& r) { return l.line < r.line; });
    detail::throw_at(detail::parse_error_code(first->kind), first->line, first->message);
  }

  UseCaseModel model;
  model.system_name = scan.boundary ? *scan.boundary : "System";
  for (const auto& d : res.elements) {
    if (d.kind == ast::ElementKind::actor) {
      model.actors.push_back({*d.alias, d.name, ast::actor_kind_from_stereotype(d.stereotype), {}});
    } else {
      model.use_cases.push_back({*d.alias, d.name, {}, {}});
    }
  }
  for (const auto& e : res.edges) {
    const std::string& from = *res.elements[e.from].alias;
    const std::string& to = *res.elements[e.to].alias;
    switch (e.kind) {
      case ast::EdgeKind::association: {
        model.associations.push_back({from, to});
        auto uc = std::find_if(model.use_cases.begin(), model.use_cases.end(),
                               [&](const UseCase& u) { return u.id == to; });
        uc->actor_ids.push_back(from);
        break;
      }
      case ast::EdgeKind::include: model.relations.push_back({from, to, RelationKind::include}); break;
      case ast::EdgeKind::extend: model.relations.push_back({from, to, RelationKind::extend}); break;
    }
  }

  auto violations = validate_model(model);
  if (!violations.empty()) {
    throw Error("E-SYNTAX", violations.front().message, nlohmann::json{{"line", 0}, {"violations", violations}});
  }
  return normalize(std::move(model));
}

inline UseCaseModel parse_model(std::string_view text) { return parse_model(DiagramSource{std::string(text)}); }

}  // namespace ucm::plantuml
