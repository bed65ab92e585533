#pragma once

#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ucm/core/model.hpp"
#include "ucm/core/text.hpp"

// Line scanner for the use-case-diagram subset of PlantUML. It never throws:
// everything it cannot make sense of is recorded as an Issue, and the strict
// parser and the linter each decide what an issue means for them.

namespace ucm::plantuml::ast {

enum class ElementKind { actor, usecase };

struct Declaration {
  ElementKind kind = ElementKind::actor;
  std::string name;                  // unescaped, as written
  std::optional<std::string> alias;  // explicit or assigned during resolution
  std::optional<std::string> stereotype;
  int line = 0;
  bool implicit = false;  // created by a :Name: or (Title) edge endpoint
  bool in_boundary = false;
};

enum class EndpointForm { word, quoted, actor_literal, usecase_literal };

struct Endpoint {
  EndpointForm form = EndpointForm::word;
  std::string text;
};

struct EdgeStatement {
  Endpoint left;
  Endpoint right;
  bool dotted = false;
  bool points_left = false;   // arrow starts with '<'
  bool points_right = false;  // arrow ends with '>'
  std::string label;
  int line = 0;
};

enum class IssueKind {
  syntax,
  duplicate_alias,
  empty_name,
  undefined_ref,
  actor_actor,
  usecase_usecase,
  dangling_relation,
};

struct Issue {
  IssueKind kind = IssueKind::syntax;
  int line = 0;
  std::string message;
};

struct ScanResult {
  std::optional<int> start_line;
  std::optional<int> end_line;
  int line_count = 0;
  std::optional<std::string> boundary;
  int boundary_line = 0;
  std::vector<Declaration> declarations;
  std::vector<EdgeStatement> edges;
  std::vector<Issue> issues;
};

// ---------------------------------------------------------------------------
// Lexer

enum class TokenKind { word, quoted, actor_literal, usecase_literal, stereotype, arrow, open_brace, close_brace, colon, color, end };

struct Token {
  TokenKind kind = TokenKind::end;
  std::string text;
};

namespace detail {

inline bool is_word_char(char c) {
  auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) || c == '_' || u >= 0x80;
}

class Lexer {
 public:
  explicit Lexer(std::string_view s) : s_(s) {}

  /// Returns std::nullopt and sets error() on malformed input.
  std::optional<std::vector<Token>> tokenize() {
    std::vector<Token> out;
    while (true) {
      skip_ws();
      if (pos_ >= s_.size()) break;
      char c = s_[pos_];
      if (c == '"') {
        auto q = quoted();
        if (!q) return std::nullopt;
        out.push_back({TokenKind::quoted, *q});
      } else if (c == ':' && opens_actor_literal(out)) {
        auto lit = delimited(':', ':');
        if (!lit) return std::nullopt;
        out.push_back({TokenKind::actor_literal, *lit});
      } else if (c == ':') {
        ++pos_;
        out.push_back({TokenKind::colon, std::string(text::trim_view(s_.substr(pos_)))});
        pos_ = s_.size();
      } else if (c == '(') {
        auto lit = delimited('(', ')');
        if (!lit) return std::nullopt;
        out.push_back({TokenKind::usecase_literal, *lit});
      } else if (c == '<' && pos_ + 1 < s_.size() && s_[pos_ + 1] == '<') {
        auto end = s_.find(">>", pos_ + 2);
        if (end == std::string_view::npos) {
          fail("unterminated stereotype");
          return std::nullopt;
        }
        out.push_back({TokenKind::stereotype, std::string(text::trim_view(s_.substr(pos_ + 2, end - pos_ - 2)))});
        pos_ = end + 2;
      } else if (c == '-' || c == '.' || c == '<') {
        auto a = arrow();
        if (!a) return std::nullopt;
        out.push_back({TokenKind::arrow, *a});
      } else if (c == '{') {
        ++pos_;
        out.push_back({TokenKind::open_brace, "{"});
      } else if (c == '}') {
        ++pos_;
        out.push_back({TokenKind::close_brace, "}"});
      } else if (c == '#') {
        auto start = pos_++;
        while (pos_ < s_.size() && !text::is_space(s_[pos_])) ++pos_;
        out.push_back({TokenKind::color, std::string(s_.substr(start, pos_ - start))});
      } else if (is_word_char(c)) {
        auto start = pos_;
        while (pos_ < s_.size() && is_word_char(s_[pos_])) ++pos_;
        out.push_back({TokenKind::word, std::string(s_.substr(start, pos_ - start))});
      } else {
        fail(std::string("unexpected character '") + c + "'");
        return std::nullopt;
      }
    }
    return out;
  }

  const std::string& error() const { return error_; }

 private:
  // A ':' opens an actor literal where a name is expected: at the start of the
  // line, right after an arrow, or after the `actor` keyword.
  static bool opens_actor_literal(const std::vector<Token>& prev) {
    if (prev.empty()) return true;
    const Token& last = prev.back();
    return last.kind == TokenKind::arrow || (prev.size() == 1 && last.kind == TokenKind::word && text::to_lower(last.text) == "actor");
  }

  void skip_ws() {
    while (pos_ < s_.size() && text::is_space(s_[pos_])) ++pos_;
  }

  std::optional<std::string> fail(std::string msg) {
    error_ = std::move(msg);
    return std::nullopt;
  }

  std::optional<std::string> quoted() {
    std::string out;
    ++pos_;
    while (pos_ < s_.size()) {
      char c = s_[pos_++];
      if (c != '"') {
        out.push_back(c);
        continue;
      }
      if (pos_ < s_.size() && s_[pos_] == '"') {
        out.push_back('"');
        ++pos_;
        continue;
      }
      return out;
    }
    return fail("unterminated string");
  }

  std::optional<std::string> delimited(char open, char close) {
    auto end = s_.find(close, pos_ + 1);
    if (end == std::string_view::npos) return fail(std::string("missing closing '") + close + "' after '" + open + "'");
    std::string out(s_.substr(pos_ + 1, end - pos_ - 1));
    pos_ = end + 1;
    return out;
  }

  std::optional<std::string> arrow() {
    auto start = pos_;
    auto body = [&] {
      auto b = pos_;
      while (pos_ < s_.size() && (s_[pos_] == '-' || s_[pos_] == '.')) ++pos_;
      return pos_ > b;
    };
    if (s_[pos_] == '<') ++pos_;
    if (!body()) return fail("malformed arrow");
    if (pos_ < s_.size() && s_[pos_] == '[') {
      auto end = s_.find(']', pos_);
      if (end == std::string_view::npos) return fail("malformed arrow style");
      pos_ = end + 1;
      body();
    }
    // direction hint such as -left->
    auto word_start = pos_;
    while (pos_ < s_.size() && std::isalpha(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (pos_ > word_start) {
      static const std::set<std::string_view> dirs{"left", "right", "up", "down", "le", "ri", "l", "r", "u", "d"};
      if (!dirs.count(s_.substr(word_start, pos_ - word_start)) || !body()) pos_ = word_start;
    }
    if (pos_ < s_.size() && s_[pos_] == '>') ++pos_;
    return std::string(s_.substr(start, pos_ - start));
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  std::string error_;
};

inline bool iequals(std::string_view a, std::string_view b) { return text::to_lower(a) == text::to_lower(b); }

inline std::string first_word(std::string_view line) {
  std::size_t i = 0;
  while (i < line.size() && !text::is_space(line[i]) && line[i] != '{') ++i;
  return text::to_lower(line.substr(0, i));
}

// Directives that decorate a diagram without changing its structure.
inline bool is_decorative(std::string_view word) {
  static const std::set<std::string_view> words{"skinparam", "title",  "hide",    "show",   "scale",
                                                "caption",   "header", "footer",  "legend", "autonumber",
                                                "allowmixing", "newpage", "note"};
  return words.count(word) > 0 || (!word.empty() && word.front() == '!');
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Scanner

class Scanner {
 public:
  ScanResult scan(std::string_view source) {
    result_ = {};
    auto lines = text::split_lines(source);
    // A trailing newline does not open an extra line.
    if (!lines.empty() && lines.back().empty() && !source.empty() && source.back() == '\n') lines.pop_back();
    result_.line_count = static_cast<int>(lines.size());

    enum class Block { none, comment, note, legend, title, brace };
    Block block = Block::none;
    int boundary_depth = 0;

    // Anything before @startuml is outside the diagram.
    std::size_t first = 0;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (detail::first_word(text::trim_view(lines[i])) == "@startuml") {
        first = i;
        break;
      }
    }

    for (std::size_t i = first; i < lines.size(); ++i) {
      const int lineno = static_cast<int>(i) + 1;
      std::string_view line = text::trim_view(lines[i]);

      if (block == Block::comment) {
        if (line.find("'/") != std::string_view::npos) block = Block::none;
        continue;
      }
      if (block == Block::note) {
        auto w = text::to_lower(line);
        if (w == "end note" || w == "endnote") block = Block::none;
        continue;
      }
      if (block == Block::legend) {
        auto w = text::to_lower(line);
        if (w == "endlegend" || w == "end legend") block = Block::none;
        continue;
      }
      if (block == Block::title) {
        auto w = text::to_lower(line);
        if (w == "end title" || w == "endtitle") block = Block::none;
        continue;
      }
      if (block == Block::brace) {
        if (line == "}") block = Block::none;
        continue;
      }

      if (line.empty() || line.front() == '\'') continue;
      if (line.substr(0, 2) == "/'") {
        if (line.find("'/", 2) == std::string_view::npos) block = Block::comment;
        continue;
      }

      const std::string word = detail::first_word(line);
      if (word == "@startuml") {
        if (!result_.start_line) result_.start_line = lineno;
        continue;
      }
      if (word == "@enduml") {
        if (!result_.end_line) result_.end_line = lineno;
        break;
      }
      if (result_.end_line) break;

      if (word == "left" || word == "top") {
        auto lower = text::to_lower(line);
        if (lower != "left to right direction" && lower != "top to bottom direction") {
          syntax(lineno, "unrecognized direction statement");
        }
        continue;
      }
      if (detail::is_decorative(word)) {
        if (word == "skinparam" && line.back() == '{') block = Block::brace;
        if (word == "legend") block = Block::legend;
        if (word == "title" && line == "title") block = Block::title;
        if (word == "note" && opens_note_block(line)) block = Block::note;
        continue;
      }

      if (line == "}") {
        if (boundary_depth == 0) {
          syntax(lineno, "unmatched '}'");
        } else {
          --boundary_depth;
        }
        continue;
      }

      auto tokens = tokenize(line, lineno);
      if (!tokens) continue;

      if (word == "rectangle" || word == "package") {
        boundary(*tokens, lineno, boundary_depth);
      } else if (word == "actor" || word == "usecase") {
        declaration(*tokens, lineno, word == "actor" ? ast::ElementKind::actor : ast::ElementKind::usecase, 1,
                    boundary_depth > 0);
      } else {
        statement(*tokens, lineno, boundary_depth > 0);
      }
    }
    if (boundary_depth > 0 && result_.end_line) syntax(*result_.end_line, "unclosed boundary '{'");
    return std::move(result_);
  }

 private:
  static bool opens_note_block(std::string_view line) {
    return line.find(':') == std::string_view::npos && line.find('"') == std::string_view::npos;
  }

  void syntax(int line, std::string msg) { result_.issues.push_back({IssueKind::syntax, line, std::move(msg)}); }

  std::optional<std::vector<Token>> tokenize(std::string_view line, int lineno) {
    detail::Lexer lexer(line);
    auto tokens = lexer.tokenize();
    if (!tokens) syntax(lineno, lexer.error());
    return tokens;
  }

  static bool is_name_token(const Token& t) {
    return t.kind == TokenKind::word || t.kind == TokenKind::quoted || t.kind == TokenKind::actor_literal ||
           t.kind == TokenKind::usecase_literal;
  }

  void boundary(const std::vector<Token>& t, int lineno, int& depth) {
    // rectangle "Name" [as X] [<<s>>] [#color] {
    if (t.size() < 3 || t.back().kind != TokenKind::open_brace || !is_name_token(t[1])) {
      syntax(lineno, "malformed system boundary");
      return;
    }
    std::string name = t[1].text;
    if (depth > 0) {
      syntax(lineno, "nested system boundary");
    } else if (result_.boundary && text::collapse_whitespace(*result_.boundary) != text::collapse_whitespace(name)) {
      syntax(lineno, "second system boundary '" + name + "'");
    } else if (!result_.boundary) {
      result_.boundary = name;
      result_.boundary_line = lineno;
    }
    ++depth;
  }

  /// Parses `<name> [as <alias>] [<<stereotype>>] [#color]` starting at t[i].
  void declaration(const std::vector<Token>& t, int lineno, ast::ElementKind kind, std::size_t i, bool in_boundary) {
    if (i >= t.size() || !is_name_token(t[i])) {
      result_.issues.push_back({IssueKind::empty_name, lineno, "declaration without a name"});
      return;
    }
    Declaration d;
    d.kind = kind;
    d.line = lineno;
    d.in_boundary = in_boundary;
    const Token& first = t[i++];
    d.name = first.text;
    bool bare_first = first.kind == TokenKind::word;

    for (; i < t.size(); ++i) {
      const Token& tok = t[i];
      if (tok.kind == TokenKind::word && detail::iequals(tok.text, "as")) {
        if (i + 1 >= t.size() || !is_name_token(t[i + 1])) {
          syntax(lineno, "'as' without an alias");
          return;
        }
        const Token& other = t[++i];
        if (other.kind == TokenKind::word) {
          d.alias = other.text;
        } else if (bare_first) {
          // actor A1 as "Customer"
          d.alias = d.name;
          d.name = other.text;
          bare_first = false;
        } else {
          syntax(lineno, "alias must be an identifier");
          return;
        }
      } else if (tok.kind == TokenKind::stereotype) {
        d.stereotype = tok.text;
      } else if (tok.kind == TokenKind::color) {
        continue;
      } else {
        syntax(lineno, "unexpected '" + tok.text + "' in declaration");
        return;
      }
    }
    if (bare_first && !d.alias && is_valid_id(d.name)) d.alias = d.name;
    if (text::is_blank(d.name)) {
      result_.issues.push_back({IssueKind::empty_name, lineno, "element with an empty name"});
    }
    result_.declarations.push_back(std::move(d));
  }

  static std::optional<Endpoint> endpoint(const Token& t) {
    switch (t.kind) {
      case TokenKind::word: return Endpoint{EndpointForm::word, t.text};
      case TokenKind::quoted: return Endpoint{EndpointForm::quoted, t.text};
      case TokenKind::actor_literal: return Endpoint{EndpointForm::actor_literal, t.text};
      case TokenKind::usecase_literal: return Endpoint{EndpointForm::usecase_literal, t.text};
      default: return std::nullopt;
    }
  }

  void statement(const std::vector<Token>& t, int lineno, bool in_boundary) {
    if (t.empty()) return;
    // Standalone :Actor: or (Use case) declaration.
    if (t.size() == 1 || (t.size() > 1 && t[1].kind != TokenKind::arrow)) {
      if (t[0].kind == TokenKind::actor_literal) {
        declaration(t, lineno, ast::ElementKind::actor, 0, in_boundary);
        return;
      }
      if (t[0].kind == TokenKind::usecase_literal) {
        declaration(t, lineno, ast::ElementKind::usecase, 0, in_boundary);
        return;
      }
      syntax(lineno, "unrecognized statement");
      return;
    }
    // <endpoint> <arrow> <endpoint> [: label]
    if (t.size() < 3) {
      syntax(lineno, "edge without a target");
      return;
    }
    auto left = endpoint(t[0]);
    auto right = endpoint(t[2]);
    if (!left || !right) {
      syntax(lineno, "malformed edge endpoints");
      return;
    }
    EdgeStatement e;
    e.left = *left;
    e.right = *right;
    e.line = lineno;
    const std::string& arrow = t[1].text;
    e.dotted = arrow.find('.') != std::string::npos;
    e.points_left = arrow.front() == '<';
    e.points_right = arrow.back() == '>';
    std::size_t i = 3;
    if (i < t.size() && t[i].kind == TokenKind::colon) {
      e.label = t[i].text;
      ++i;
    }
    if (i != t.size()) {
      syntax(lineno, "unexpected '" + t[i].text + "' after edge");
      return;
    }
    result_.edges.push_back(std::move(e));
  }

  ScanResult result_;
};

// ---------------------------------------------------------------------------
// Resolution: implicit declarations, alias assignment, edge endpoints.

enum class EdgeKind { association, include, extend };

struct ResolvedEdge {
  EdgeKind kind = EdgeKind::association;
  std::size_t from = 0;  // declaration index; actor for associations
  std::size_t to = 0;
  int line = 0;
};

struct Resolution {
  std::vector<Declaration> elements;  // deduplicated, every alias assigned
  std::vector<ResolvedEdge> edges;
  std::vector<Issue> issues;
};

inline std::optional<RelationKind> relation_label(std::string_view label) {
  auto l = text::to_lower(label);
  if (l.find("<<include>>") != std::string::npos) return RelationKind::include;
  if (l.find("<<extend>>") != std::string::npos || l.find("<<extends>>") != std::string::npos) return RelationKind::extend;
  return std::nullopt;
}

inline ActorKind actor_kind_from_stereotype(const std::optional<std::string>& stereotype) {
  if (!stereotype) return ActorKind::human;
  auto s = text::to_lower(text::collapse_whitespace(*stereotype));
  if (s == "external_system" || s == "external system" || s == "system" || s == "external") {
    return ActorKind::external_system;
  }
  if (s == "hardware" || s == "device") return ActorKind::hardware;
  return ActorKind::human;
}

inline Resolution resolve(const ScanResult& scan) {
  Resolution r;
  auto same_name = [](const std::string& a, const std::string& b) {
    return text::collapse_whitespace(a) == text::collapse_whitespace(b);
  };
  auto find_by_name = [&](ElementKind kind, const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < r.elements.size(); ++i) {
      if (r.elements[i].kind == kind && same_name(r.elements[i].name, name)) return i;
    }
    return std::nullopt;
  };

  std::map<std::string, std::size_t> by_alias;
  for (const auto& d : scan.declarations) {
    if (d.alias) {
      auto [it, inserted] = by_alias.emplace(*d.alias, r.elements.size());
      if (!inserted) {
        r.issues.push_back({IssueKind::duplicate_alias, d.line, "alias '" + *d.alias + "' declared more than once"});
        continue;
      }
      r.elements.push_back(d);
    } else if (!find_by_name(d.kind, d.name)) {
      r.elements.push_back(d);
    }
  }

  // Literal endpoints declare their element on first use.
  for (const auto& e : scan.edges) {
    for (const Endpoint* ep : {&e.left, &e.right}) {
      if (ep->form != EndpointForm::actor_literal && ep->form != EndpointForm::usecase_literal) continue;
      auto kind = ep->form == EndpointForm::actor_literal ? ElementKind::actor : ElementKind::usecase;
      if (find_by_name(kind, ep->text)) continue;
      Declaration d;
      d.kind = kind;
      d.name = ep->text;
      d.line = e.line;
      d.implicit = true;
      if (text::is_blank(d.name)) r.issues.push_back({IssueKind::empty_name, e.line, "element with an empty name"});
      r.elements.push_back(std::move(d));
    }
  }

  // Assign aliases A<n> / UC<n> in declaration order, skipping taken ones.
  int next_actor = 1;
  int next_usecase = 1;
  for (auto& d : r.elements) {
    if (d.alias) continue;
    bool actor = d.kind == ElementKind::actor;
    int& counter = actor ? next_actor : next_usecase;
    std::string candidate;
    do {
      candidate = (actor ? "A" : "UC") + std::to_string(counter++);
    } while (by_alias.count(candidate));
    d.alias = candidate;
    by_alias.emplace(candidate, static_cast<std::size_t>(&d - r.elements.data()));
  }

  auto lookup = [&](const Endpoint& ep) -> std::optional<std::size_t> {
    switch (ep.form) {
      case EndpointForm::actor_literal: return find_by_name(ElementKind::actor, ep.text);
      case EndpointForm::usecase_literal: return find_by_name(ElementKind::usecase, ep.text);
      case EndpointForm::word: {
        auto it = by_alias.find(ep.text);
        if (it != by_alias.end()) return it->second;
        [[fallthrough]];
      }
      case EndpointForm::quoted: {
        if (auto a = find_by_name(ElementKind::actor, ep.text)) return a;
        return find_by_name(ElementKind::usecase, ep.text);
      }
    }
    return std::nullopt;
  };

  for (const auto& e : scan.edges) {
    auto rel = relation_label(e.label);
    auto left = lookup(e.left);
    auto right = lookup(e.right);
    if (!left || !right) {
      const std::string& missing = !left ? e.left.text : e.right.text;
      auto kind = rel ? IssueKind::dangling_relation : IssueKind::undefined_ref;
      r.issues.push_back({kind, e.line, "'" + missing + "' is never declared"});
      continue;
    }
    const auto& l = r.elements[*left];
    const auto& rr = r.elements[*right];
    if (rel) {
      if (l.kind != ElementKind::usecase || rr.kind != ElementKind::usecase) {
        r.issues.push_back({IssueKind::syntax, e.line, "include/extend must connect two use cases"});
        continue;
      }
      bool reversed = e.points_left && !e.points_right;
      ResolvedEdge re;
      re.kind = *rel == RelationKind::include ? EdgeKind::include : EdgeKind::extend;
      re.from = reversed ? *right : *left;
      re.to = reversed ? *left : *right;
      re.line = e.line;
      if (re.from == re.to) {
        r.issues.push_back({IssueKind::syntax, e.line, "relation from a use case to itself"});
        continue;
      }
      r.edges.push_back(re);
      continue;
    }
    if (l.kind == ElementKind::actor && rr.kind == ElementKind::actor) {
      r.issues.push_back({IssueKind::actor_actor, e.line, "association between two actors"});
      continue;
    }
    if (l.kind == ElementKind::usecase && rr.kind == ElementKind::usecase) {
      r.issues.push_back({IssueKind::usecase_usecase, e.line, "plain association between two use cases"});
      continue;
    }
    ResolvedEdge re;
    re.kind = EdgeKind::association;
    re.from = l.kind == ElementKind::actor ? *left : *right;
    re.to = l.kind == ElementKind::actor ? *right : *left;
    re.line = e.line;
    r.edges.push_back(re);
  }
  return r;
}

}  // namespace ucm::plantuml::ast
