#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ucm/builtin_templates_data.hpp"
#include "ucm/error.hpp"
#include "ucm/llm/request.hpp"

namespace ucm::llm {

struct PromptTemplate {
  std::string id;
  int version = 1;
  std::string role_preamble;
  std::string knowledge_block;
  std::vector<std::string> negative_constraints;
  std::string task_instruction;
  std::string output_schema;

  bool operator==(const PromptTemplate&) const = default;
};

inline void to_json(nlohmann::json& j, const PromptTemplate& t) {
  j = {{"id", t.id},
       {"version", t.version},
       {"role_preamble", t.role_preamble},
       {"knowledge_block", t.knowledge_block},
       {"negative_constraints", t.negative_constraints},
       {"task_instruction", t.task_instruction},
       {"output_schema", t.output_schema}};
}

inline void from_json(const nlohmann::json& j, PromptTemplate& t) {
  j.at("id").get_to(t.id);
  t.version = j.value("version", 1);
  j.at("role_preamble").get_to(t.role_preamble);
  t.knowledge_block = j.value("knowledge_block", std::string{});
  t.negative_constraints = j.value("negative_constraints", std::vector<std::string>{});
  j.at("task_instruction").get_to(t.task_instruction);
  t.output_schema = j.value("output_schema", std::string{});
}

namespace detail {

inline bool placeholder_char(char c, bool first) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' || (!first && c >= '0' && c <= '9');
}

// One piece of a task instruction: literal text, or a placeholder name.
struct Segment {
  bool placeholder = false;
  std::string text;
};

inline std::vector<Segment> split_placeholders(std::string_view s, std::string_view template_id) {
  std::vector<Segment> out;
  std::string literal;
  std::size_t i = 0;
  while (i < s.size()) {
    if (s.compare(i, 2, "{{") != 0) {
      literal.push_back(s[i++]);
      continue;
    }
    const std::size_t close = s.find("}}", i + 2);
    const std::string_view name = close == std::string_view::npos ? std::string_view{} : s.substr(i + 2, close - i - 2);
    bool ok = !name.empty();
    for (std::size_t k = 0; ok && k < name.size(); ++k) ok = placeholder_char(name[k], k == 0);
    if (!ok) {
      throw Error("E-BAD-TEMPLATE", "malformed placeholder at offset " + std::to_string(i) + " in template '" +
                                        std::string(template_id) + "'",
                  {{"template", template_id}, {"offset", i}});
    }
    if (!literal.empty()) out.push_back({false, std::move(literal)});
    literal.clear();
    out.push_back({true, std::string(name)});
    i = close + 2;
  }
  if (!literal.empty()) out.push_back({false, std::move(literal)});
  return out;
}

}  // namespace detail

/// Placeholder names used by the task instruction, in order of first use.
inline std::vector<std::string> placeholders(const PromptTemplate& t) {
  std::vector<std::string> names;
  std::set<std::string> seen;
  for (const auto& seg : detail::split_placeholders(t.task_instruction, t.id)) {
    if (seg.placeholder && seen.insert(seg.text).second) names.push_back(seg.text);
  }
  return names;
}

inline void check_template(const PromptTemplate& t) {
  if (t.id.empty()) throw Error("E-BAD-TEMPLATE", "template id is empty");
  if (t.task_instruction.empty()) throw Error("E-BAD-TEMPLATE", "template '" + t.id + "' has an empty task instruction", {{"template", t.id}});
  placeholders(t);
}

struct RenderOptions {
  bool strict = true;
  double temperature = 0.2;
  int max_tokens = 2048;
  std::string model_name = "default";
};

inline std::string system_message(const PromptTemplate& t) {
  std::string out = t.role_preamble;
  if (!t.knowledge_block.empty()) out += "\n\n" + t.knowledge_block;
  if (!t.negative_constraints.empty()) {
    out += "\n\nAvoid the following:";
    for (std::size_t i = 0; i < t.negative_constraints.size(); ++i) {
      out += "\n" + std::to_string(i + 1) + ". " + t.negative_constraints[i];
    }
  }
  return out;
}

/// Builds the two-message request for a template. Substitution is a single
/// pass, so placeholder-like text inside a value is left alone.
inline CompletionRequest render_prompt(const PromptTemplate& t, const std::map<std::string, std::string>& vars,
                                       const RenderOptions& opts = {}) {
  check_template(t);
  const auto segments = detail::split_placeholders(t.task_instruction, t.id);
  std::set<std::string> used;
  std::string user;
  for (const auto& seg : segments) {
    if (!seg.placeholder) {
      user += seg.text;
      continue;
    }
    auto it = vars.find(seg.text);
    if (it == vars.end()) {
      throw Error("E-UNBOUND-VAR", "no value for placeholder '" + seg.text + "'", {{"template", t.id}, {"variable", seg.text}});
    }
    used.insert(seg.text);
    user += it->second;
  }
  if (opts.strict) {
    for (const auto& [name, value] : vars) {
      if (!used.count(name)) {
        throw Error("E-UNKNOWN-VAR", "template '" + t.id + "' has no placeholder '" + name + "'",
                    {{"template", t.id}, {"variable", name}});
      }
    }
  }
  if (!t.output_schema.empty()) user += "\n\n" + t.output_schema;

  CompletionRequest req;
  req.messages = {{Role::system, system_message(t)}, {Role::user, std::move(user)}};
  req.temperature = opts.temperature;
  req.max_tokens = opts.max_tokens;
  req.model_name = opts.model_name;
  return req;
}

using TemplateSet = std::map<std::string, PromptTemplate>;

inline PromptTemplate parse_template(std::string_view json_text, std::string_view origin) {
  PromptTemplate t;
  try {
    t = nlohmann::json::parse(json_text).get<PromptTemplate>();
  } catch (const nlohmann::json::exception& e) {
    throw Error("E-BAD-TEMPLATE", "cannot read template " + std::string(origin) + ": " + e.what(), {{"origin", origin}});
  }
  check_template(t);
  return t;
}

/// The four templates shipped with the library.
inline const TemplateSet& builtin_templates() {
  static const TemplateSet set = [] {
    TemplateSet s;
    for (auto text : generated::builtin_template_files) {
      auto t = parse_template(text, "builtin");
      s.emplace(t.id, std::move(t));
    }
    return s;
  }();
  return set;
}

/// Builtins overlaid with every *.json template found in `dir`.
inline TemplateSet load_templates(const std::filesystem::path& dir) {
  TemplateSet s = builtin_templates();
  if (!std::filesystem::is_directory(dir)) return s;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    std::ifstream in(entry.path());
    std::string text((std::istreambuf_iterator<char>(in)), {});
    auto t = parse_template(text, entry.path().string());
    s.insert_or_assign(t.id, std::move(t));
  }
  return s;
}

inline const PromptTemplate& get_template(const TemplateSet& set, const std::string& id) {
  auto it = set.find(id);
  if (it == set.end()) throw Error("E-BAD-TEMPLATE", "unknown template '" + id + "'", {{"template", id}});
  return it->second;
}

}  // namespace ucm::llm
