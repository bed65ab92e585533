#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "ucm/plantuml/render.hpp"
#include "ucm/plantuml/scan.hpp"

namespace ucm::plantuml {

enum class Severity { error, warning };

NLOHMANN_JSON_SERIALIZE_ENUM(Severity, {{Severity::error, "error"}, {Severity::warning, "warning"}})

struct LintFinding {
  std::string code;
  std::string message;
  int line = 0;
  Severity severity = Severity::error;
  bool operator==(const LintFinding&) const = default;
};

inline void to_json(nlohmann::json& j, const LintFinding& f) {
  j = {{"code", f.code}, {"message", f.message}, {"line", f.line}, {"severity", f.severity}};
}

/// One entry per rule the linter knows about. L-SYNTAX covers lines the
/// scanner cannot interpret at all.
struct LintRule {
  std::string_view code;
  Severity severity;
  std::string_view summary;
};

inline constexpr LintRule lint_rules[] = {
    {"L-NO-START", Severity::error, "source does not begin with @startuml"},
    {"L-NO-END", Severity::error, "source does not end with @enduml"},
    {"L-UNDEF-REF", Severity::error, "association endpoint is never declared"},
    {"L-DUP-ALIAS", Severity::error, "the same alias is declared twice"},
    {"L-ACTOR-ACTOR", Severity::error, "association between two actors"},
    {"L-ORPHAN-UC", Severity::warning, "use case without any association"},
    {"L-EMPTY-NAME", Severity::error, "actor, use case or boundary with an empty name"},
    {"L-DANGLING-REL", Severity::error, "include/extend endpoint is never declared"},
    {"L-SYNTAX", Severity::error, "line is not part of the supported grammar"},
};

inline Severity severity_of(std::string_view code) {
  for (const auto& r : lint_rules) {
    if (r.code == code) return r.severity;
  }
  return Severity::error;
}

inline bool has_errors(const std::vector<LintFinding>& findings) {
  return std::any_of(findings.begin(), findings.end(), [](const auto& f) { return f.severity == Severity::error; });
}

/// Never throws. Findings are sorted by line, then code.
inline std::vector<LintFinding> lint(const DiagramSource& src) {
  std::vector<LintFinding> out;
  auto add = [&out](std::string code, int line, std::string msg) {
    Severity sev = severity_of(code);
    out.push_back({std::move(code), std::move(msg), line, sev});
  };

  ast::Scanner scanner;
  const ast::ScanResult scan = scanner.scan(src.text);
  if (!scan.start_line) add("L-NO-START", 1, "missing @startuml");
  if (!scan.end_line) add("L-NO-END", std::max(scan.line_count, 1), "missing @enduml");

  const ast::Resolution res = ast::resolve(scan);
  auto code_for = [](ast::IssueKind k) -> std::string {
    switch (k) {
      case ast::IssueKind::syntax: return "L-SYNTAX";
      case ast::IssueKind::duplicate_alias: return "L-DUP-ALIAS";
      case ast::IssueKind::empty_name: return "L-EMPTY-NAME";
      case ast::IssueKind::undefined_ref: return "L-UNDEF-REF";
      case ast::IssueKind::actor_actor: return "L-ACTOR-ACTOR";
      case ast::IssueKind::usecase_usecase: return "L-SYNTAX";
      case ast::IssueKind::dangling_relation: return "L-DANGLING-REL";
    }
    return "L-SYNTAX";
  };
  for (const auto& i : scan.issues) add(code_for(i.kind), i.line, i.message);
  for (const auto& i : res.issues) add(code_for(i.kind), i.line, i.message);

  if (scan.boundary && text::is_blank(*scan.boundary)) add("L-EMPTY-NAME", scan.boundary_line, "system boundary has an empty name");

  std::set<std::size_t> associated;
  for (const auto& e : res.edges) {
    if (e.kind == ast::EdgeKind::association) associated.insert(e.to);
  }
  for (std::size_t i = 0; i < res.elements.size(); ++i) {
    const auto& d = res.elements[i];
    if (!is_valid_id(*d.alias)) add("L-SYNTAX", d.line, "alias '" + *d.alias + "' is not a valid identifier");
    if (d.kind == ast::ElementKind::usecase && !associated.count(i) && !text::is_blank(d.name)) {
      add("L-ORPHAN-UC", d.line, "use case '" + text::collapse_whitespace(d.name) + "' has no associated actor");
    }
  }

  std::sort(out.begin(), out.end(), [](const LintFinding& l, const LintFinding& r) {
    return std::tie(l.line, l.code, l.message) < std::tie(r.line, r.code, r.message);
  });
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline std::vector<LintFinding> lint(std::string_view text) { return lint(DiagramSource{std::string(text)}); }

}  // namespace ucm::plantuml
