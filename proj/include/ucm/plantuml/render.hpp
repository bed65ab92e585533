#pragma once

#include <string>
#include <string_view>

#include "ucm/core/model.hpp"

namespace ucm::plantuml {

/// PlantUML source text; arbitrary and possibly invalid.
struct DiagramSource {
  std::string text;
  bool operator==(const DiagramSource&) const = default;
};

/// Wraps a display string in double quotes, doubling embedded quotes.
inline std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

/// Human actors carry no stereotype; other kinds are tagged so the kind
/// survives a render/parse round trip.
inline std::string_view actor_stereotype(ActorKind kind) {
  switch (kind) {
    case ActorKind::external_system: return " <<external_system>>";
    case ActorKind::hardware: return " <<hardware>>";
    case ActorKind::human: break;
  }
  return "";
}

/// Emits the frozen diagram grammar for a valid model, in normalized order.
inline DiagramSource render_model(const UseCaseModel& input) {
  const UseCaseModel model = normalize(input);

  std::string out;
  auto line = [&out](std::string_view l) {
    out.append(l);
    out.push_back('\n');
  };

  line("@startuml");
  line("left to right direction");
  for (const auto& a : model.actors) {
    line("actor " + quote(a.name) + " as " + a.id + std::string(actor_stereotype(a.kind)));
  }
  line("rectangle " + quote(model.system_name) + " {");
  for (const auto& u : model.use_cases) line("  usecase " + quote(u.title) + " as " + u.id);
  line("}");
  for (const auto& e : model.associations) line(e.actor_id + " --> " + e.usecase_id);
  for (const auto& r : model.relations) {
    line(r.from_id + " ..> " + r.to_id + " : <<" + std::string(to_string(r.kind)) + ">>");
  }
  line("@enduml");
  return {std::move(out)};
}

/// Reference text for the grammar render_model() emits. Prompt templates that
/// teach the model this subset must embed it verbatim.
inline constexpr std::string_view grammar_reference =
    "@startuml\n"
    "left to right direction\n"
    "actor \"<actor name>\" as <actor id>\n"
    "actor \"<actor name>\" as <actor id> <<external_system>>\n"
    "actor \"<actor name>\" as <actor id> <<hardware>>\n"
    "rectangle \"<system name>\" {\n"
    "  usecase \"<use case title>\" as <use case id>\n"
    "}\n"
    "<actor id> --> <use case id>\n"
    "<use case id> ..> <use case id> : <<include>>\n"
    "<use case id> ..> <use case id> : <<extend>>\n"
    "@enduml\n";

}  // namespace ucm::plantuml
