#pragma once

#include <algorithm>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ucm/core/model.hpp"
#include "ucm/error.hpp"
#include "ucm/eval/score.hpp"
#include "ucm/eval/timing.hpp"
#include "ucm/llm/live.hpp"
#include "ucm/llm/provider.hpp"
#include "ucm/pipeline/actions.hpp"
#include "ucm/pipeline/engine.hpp"
#include "ucm/plantuml/lint.hpp"
#include "ucm/plantuml/parse.hpp"
#include "ucm/plantuml/render.hpp"
#include "ucm/service/server.hpp"

namespace ucm::cli {

namespace fs = std::filesystem;

enum class OutputMode { text, json };

struct GlobalOptions {
  std::string provider = "replay";
  std::string fixtures;
  std::string record;
  std::string script;  // replies for the scripted provider
  std::string data_dir;
  std::string endpoint;
  std::string model;
  std::string api_key;
  OutputMode output = OutputMode::text;
};

/// Thrown for command-line mistakes that CLI11 cannot catch on its own
/// (unknown provider, missing --fixtures, ...). Maps to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("E-IO", "cannot read " + p.string(), {{"path", p.string()}});
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("E-IO", "cannot write " + p.string(), {{"path", p.string()}});
  out << content;
}

inline nlohmann::json read_json_file(const fs::path& p) {
  auto j = nlohmann::json::parse(read_file(p), nullptr, false);
  if (j.is_discarded()) throw Error("E-BAD-REQUEST", p.string() + " is not valid JSON", {{"path", p.string()}});
  return j;
}

/// A model file may hold a bare model or a session export.
inline UseCaseModel read_model_file(const fs::path& p) {
  auto j = read_json_file(p);
  if (j.is_object() && !j.contains("actors") && j.contains("model")) j = j.at("model");
  if (j.is_null()) throw Error("E-NO-MODEL", p.string() + " holds a session without a model");
  try {
    return j.get<UseCaseModel>();
  } catch (const nlohmann::json::exception& e) {
    throw Error("E-BAD-REQUEST", p.string() + " is not a use case model: " + e.what(), {{"path", p.string()}});
  }
}

inline std::shared_ptr<llm::Provider> make_provider(const GlobalOptions& g) {
  std::shared_ptr<llm::Provider> p;
  if (g.provider == "replay") {
    if (g.fixtures.empty()) throw UsageError("--provider replay needs --fixtures <dir>");
    p = std::make_shared<llm::ReplayProvider>(g.fixtures);
  } else if (g.provider == "live") {
    llm::LiveConfig cfg;
    cfg.endpoint = g.endpoint;
    cfg.model = g.model;
    cfg.api_key = g.api_key;
    cfg = llm::live_config_from_env(cfg);
    p = std::make_shared<llm::LiveProvider>(cfg);
  } else if (g.provider == "scripted") {
    if (g.script.empty()) throw UsageError("--provider scripted needs --script <replies.json>");
    auto replies = read_json_file(g.script);
    if (!replies.is_array()) throw UsageError("--script must hold a JSON list of reply strings");
    auto sp = std::make_shared<llm::ScriptedProvider>();
    for (const auto& r : replies) sp->push(r.get<std::string>());
    p = sp;
  } else {
    throw UsageError("--provider must be live, replay or scripted");
  }
  if (!g.record.empty()) p = std::make_shared<llm::RecordingProvider>(p, g.record);
  return p;
}

inline void report_error(std::ostream& err, OutputMode mode, const Error& e) {
  if (mode == OutputMode::json) {
    err << e.to_json().dump() << '\n';
  } else {
    err << "error: " << e.code() << ": " << e.what() << '\n';
    if (!e.details().empty()) err << "  " << e.details().dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Text formatting

inline std::string fmt_fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

inline std::string fmt_metric(const std::optional<double>& v) { return v ? fmt_fixed(eval::round_display(*v), 2) : "undefined"; }

/// Three significant digits, so 0.0037603 prints as 0.00376.
inline std::string fmt_p(double p) {
  std::ostringstream os;
  if (p < 1e-4) os << std::scientific << std::setprecision(2) << p;
  else os << std::setprecision(3) << p;
  return os.str();
}

inline std::string stats_text(const eval::StatsReport& r) {
  std::ostringstream os;
  os << "participants        " << r.n << '\n'
     << "mean manual         " << fmt_fixed(r.mean_manual, 2) << " min\n"
     << "mean LLM-assisted   " << fmt_fixed(r.mean_assisted, 2) << " min\n"
     << "time reduction      " << fmt_fixed(100.0 * r.reduction_pct, 1) << "%\n"
     << "Shapiro-Wilk        W = " << fmt_fixed(r.shapiro_w, 4) << ", p = " << fmt_p(r.shapiro_p)
     << (r.normality_not_rejected() ? " (normality not rejected)" : " (normality rejected)") << '\n'
     << "paired t-test       t = " << fmt_fixed(r.t_stat, 2) << ", df = " << r.df << ", p = " << fmt_p(r.p_value)
     << (r.significant() ? " (significant at alpha = " : " (not significant at alpha = ") << r.alpha << ")\n";
  return os.str();
}

inline std::string eval_text(const eval::EvalReport& r) {
  std::ostringstream os;
  auto line = [&](const char* label, const eval::ElementScore& s) {
    const auto& m = s.metrics;
    os << label << "  tp=" << m.tp << " fp=" << m.fp << " fn=" << m.fn << "  P=" << fmt_metric(m.precision)
       << " R=" << fmt_metric(m.recall) << " F1=" << fmt_metric(m.f1) << '\n';
    for (const auto& p : s.matches) os << "    " << p.truth_id << " ~ " << p.candidate_id << " (" << fmt_fixed(p.score, 2) << ")\n";
    if (!s.unmatched_truth.empty()) {
      os << "    missed:";
      for (const auto& id : s.unmatched_truth) os << ' ' << id;
      os << '\n';
    }
    if (!s.unmatched_candidate.empty()) {
      os << "    extra:";
      for (const auto& id : s.unmatched_candidate) os << ' ' << id;
      os << '\n';
    }
  };
  line("actors   ", r.actors);
  line("use cases", r.use_cases);
  if (r.any_undefined()) os << "warning: some metrics are undefined\n";
  return os.str();
}

inline std::string lint_text(const std::vector<plantuml::LintFinding>& findings) {
  if (findings.empty()) return "no findings\n";
  std::ostringstream os;
  for (const auto& f : findings) {
    os << "line " << f.line << ": " << f.code << " [" << (f.severity == plantuml::Severity::error ? "error" : "warning")
       << "] " << f.message << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Interactive run

inline void print_actors(std::ostream& os, const std::vector<Actor>& actors) {
  for (const auto& a : actors) os << "  " << a.id << "  " << a.name << " (" << to_string(a.kind) << ")\n";
}

inline void print_usecases(std::ostream& os, const std::vector<UseCase>& ucs) {
  for (const auto& u : ucs) {
    os << "  " << u.id << "  " << u.title << "  [";
    for (std::size_t i = 0; i < u.actor_ids.size(); ++i) os << (i ? ", " : "") << u.actor_ids[i];
    os << "]\n";
  }
}

inline void print_notices(std::ostream& os, const pipeline::Session& s, pipeline::Step step) {
  for (const auto& w : s.warnings) {
    if (w.stage == step) os << "  warning " << w.code << (w.element_id.empty() ? "" : " " + w.element_id) << ": " << w.message << '\n';
  }
  for (const auto& f : s.flags) os << "  flag " << f.code << (f.element_id.empty() ? "" : " " + f.element_id) << ": " << f.message << '\n';
}

inline std::vector<std::string> split_ids(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s + ",") {
    if (c == ',' || c == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  return out;
}

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

/// Turns one review command into an edit. Returns nullopt for commands that
/// are not edits.
inline std::optional<pipeline::Edit> parse_review_command(pipeline::Step step, const std::string& line) {
  std::istringstream is(line);
  std::string verb;
  is >> verb;
  std::string rest;
  std::getline(is, rest);
  rest = trim(rest);
  pipeline::Edit e;
  e.stage = step;
  auto first_word = [&]() {
    auto sp = rest.find(' ');
    return sp == std::string::npos ? rest : rest.substr(0, sp);
  };
  auto after_first = [&]() {
    auto sp = rest.find(' ');
    return sp == std::string::npos ? std::string{} : trim(rest.substr(sp + 1));
  };
  if (verb == "rm") {
    e.kind = pipeline::EditKind::remove;
    e.target_id = rest;
  } else if (verb == "mv") {
    e.kind = pipeline::EditKind::rename;
    e.target_id = first_word();
    e.payload = {{step == pipeline::Step::actors ? "name" : "title", after_first()}};
  } else if (verb == "link") {
    e.kind = pipeline::EditKind::relink;
    e.target_id = first_word();
    e.payload = {{"actor_ids", split_ids(after_first())}};
  } else if (verb == "add") {
    e.kind = pipeline::EditKind::add;
    auto at = rest.rfind(" @");
    std::string name = at == std::string::npos ? rest : trim(rest.substr(0, at));
    if (step == pipeline::Step::actors) {
      e.payload = {{"name", name}};
    } else if (step == pipeline::Step::usecases) {
      e.payload = {{"title", name}, {"actor_ids", at == std::string::npos ? std::vector<std::string>{} : split_ids(rest.substr(at + 2))}};
    } else {
      auto sp = name.find(' ');
      std::string element = sp == std::string::npos ? name : name.substr(0, sp);
      std::string label = sp == std::string::npos ? "" : trim(name.substr(sp + 1));
      e.payload = {{"element", element}, {element == "actor" ? "name" : "title", label}};
      if (at != std::string::npos) e.payload["actor_ids"] = split_ids(rest.substr(at + 2));
    }
  } else {
    return std::nullopt;
  }
  return e;
}

inline const char* kReviewHelp =
    "  commands: ok | rm <id> | mv <id> <new name> | add <name> [@A1,A2] | link <UCid> A1,A2 | rerun | show | quit\n";

/// Runs one proposal step and lets the user edit it until they confirm.
/// Returns false if the user quit.
inline bool review_step(const pipeline::Engine& engine, pipeline::Session& s, pipeline::Step step, std::istream& in,
                        std::ostream& err) {
  pipeline::run_step(engine, s, step);
  auto show = [&] {
    err << "\n== " << pipeline::step_name(step) << " (stage " << pipeline::stage_name(s.stage) << ")\n";
    if (step == pipeline::Step::actors) print_actors(err, s.proposed_actors);
    else if (step == pipeline::Step::usecases) print_usecases(err, s.proposed_usecases);
    else if (s.model_source) err << *s.model_source;
    print_notices(err, s, step);
    err << kReviewHelp;
  };
  show();
  std::string line;
  while (true) {
    err << "> " << std::flush;
    if (!std::getline(in, line)) return false;
    line = trim(line);
    if (line.empty() || line == "ok") {
      engine.confirm(s);
      return true;
    }
    if (line == "quit" || line == "q") return false;
    try {
      if (line == "rerun") {
        pipeline::run_step(engine, s, step);
        show();
        continue;
      }
      if (line == "show") {
        show();
        continue;
      }
      auto edit = parse_review_command(step, line);
      if (!edit) {
        err << "unknown command\n" << kReviewHelp;
        continue;
      }
      engine.apply_edits(s, {*edit});
      show();
    } catch (const Error& e) {
      err << "  " << e.code() << ": " << e.what() << '\n';
    }
  }
}

inline bool interactive_session(const pipeline::Engine& engine, pipeline::Session& s, std::istream& in, std::ostream& err) {
  for (auto step : {pipeline::Step::actors, pipeline::Step::usecases, pipeline::Step::model}) {
    if (!review_step(engine, s, step, in, err)) return false;
  }
  err << "\nDescribe which use cases? (all | none | UC1,UC2 ...) [all]\n> " << std::flush;
  std::string line;
  if (!std::getline(in, line)) line = "none";
  line = trim(line);
  if (line != "none") {
    nlohmann::json body = nlohmann::json::object();
    if (!line.empty() && line != "all") body["usecase_ids"] = split_ids(line);
    pipeline::run_step(engine, s, pipeline::Step::descriptions, body);
    for (const auto& d : s.descriptions) err << "  described " << d.usecase_id << " (" << d.main_flow.size() << " steps)\n";
  }
  return true;
}

// ---------------------------------------------------------------------------
// Dispatch

/// Parses `args` (without the program name) and runs the chosen command.
/// Exit codes: 0 success, 1 domain failure, 2 usage error.
inline int run_cli(std::vector<std::string> args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Use case modeling workbench"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(UCM_VERSION));

  GlobalOptions g;
  std::string output = "text";
  app.add_option("--provider", g.provider, "LLM backend: live, replay or scripted")
      ->check(CLI::IsMember({"live", "replay", "scripted"}))
      ->capture_default_str();
  app.add_option("--fixtures", g.fixtures, "Fixture directory for the replay provider");
  app.add_option("--record", g.record, "Record every exchange into this fixture directory");
  app.add_option("--script", g.script, "JSON list of replies for the scripted provider")->check(CLI::ExistingFile);
  app.add_option("--data-dir", g.data_dir, "Session directory for serve (default: $UCM_DATA_DIR or ./ucm-data)");
  app.add_option("--endpoint", g.endpoint, "Chat completions endpoint (overrides UCM_LLM_ENDPOINT)");
  app.add_option("--model", g.model, "Model name (overrides UCM_LLM_MODEL)");
  app.add_option("--api-key", g.api_key, "API key (overrides UCM_LLM_API_KEY)");
  app.add_option("--output", output, "Output mode: text or json")->check(CLI::IsMember({"text", "json"}))->capture_default_str();

  // run
  auto* run = app.add_subcommand("run", "Work through the four stages for one requirements file");
  std::string req_file, session_script, run_title, export_format = "json", out_file, templates_dir;
  bool fixed_clock = false;
  run->add_option("requirements", req_file, "Requirements text file")->required()->check(CLI::ExistingFile);
  run->add_option("--session-script", session_script, "Apply scripted actions instead of prompting")->check(CLI::ExistingFile);
  run->add_option("--title", run_title, "System name (default: first line of the file)");
  run->add_option("--export", export_format, "Export format: json or puml")->check(CLI::IsMember({"json", "puml"}))->capture_default_str();
  run->add_option("--out", out_file, "Write the export here instead of stdout");
  run->add_option("--templates", templates_dir, "Directory of prompt templates overriding the built-in ones")->check(CLI::ExistingDirectory);
  run->add_flag("--fixed-clock", fixed_clock, "Synthetic clock and sequential ids, for reproducible exports");

  // render / parse / lint
  auto* render = app.add_subcommand("render", "Render a model JSON file as PlantUML");
  std::string model_file;
  render->add_option("model", model_file, "Model or session JSON")->required()->check(CLI::ExistingFile);

  auto* parse = app.add_subcommand("parse", "Parse a PlantUML file into model JSON");
  std::string puml_file;
  parse->add_option("file", puml_file, "PlantUML file")->required()->check(CLI::ExistingFile);

  auto* lint = app.add_subcommand("lint", "Check a PlantUML file; exit 1 on error findings");
  lint->add_option("file", puml_file, "PlantUML file")->required()->check(CLI::ExistingFile);

  // eval
  auto* evalc = app.add_subcommand("eval", "Score a candidate model against ground truth");
  std::string truth_file, candidate_file, overrides_file;
  evalc->add_option("--truth", truth_file, "Ground truth model JSON")->required()->check(CLI::ExistingFile);
  evalc->add_option("--candidate", candidate_file, "Candidate model JSON")->required()->check(CLI::ExistingFile);
  evalc->add_option("--overrides", overrides_file, "Matcher settings: threshold, synonyms, manual overrides")->check(CLI::ExistingFile);

  // stats
  auto* stats = app.add_subcommand("stats", "Timing analysis: reduction, Shapiro-Wilk, paired t-test");
  std::string times_file;
  double alpha = 0.01;
  stats->add_option("--times", times_file, "CSV with participant,condition,minutes")->required()->check(CLI::ExistingFile);
  stats->add_option("--alpha", alpha, "Significance level")->capture_default_str();

  // serve
  auto* serve = app.add_subcommand("serve", "Start the HTTP service");
  service::ServiceConfig scfg;
  serve->add_option("--port", scfg.port, "Port (0 picks a free one)")->capture_default_str()->check(CLI::Range(0, 65535));
  serve->add_option("--host", scfg.host, "Bind address")->capture_default_str();
  serve->add_option("--cors-origin", scfg.cors_origin, "Allowed browser origin")->capture_default_str();

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << UCM_VERSION << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "usage error: " << e.what() << '\n' << "run with --help for usage\n";
    return 2;
  }

  g.output = output == "json" ? OutputMode::json : OutputMode::text;
  const bool json_mode = g.output == OutputMode::json;

  try {
    if (*run) {
      auto requirements = read_file(req_file);
      pipeline::EngineConfig ecfg;
      if (!templates_dir.empty()) ecfg.templates = llm::load_templates(templates_dir);
      if (fixed_clock) {
        ecfg.clock = pipeline::stepping_clock(0, 60'000);
        ecfg.ids = pipeline::counter_ids("session-");
      }
      pipeline::Engine engine(make_provider(g), std::move(ecfg));
      pipeline::Session s;
      if (!session_script.empty()) {
        auto script = pipeline::parse_session_script(read_json_file(session_script));
        if (!run_title.empty()) script.title = run_title;
        if (script.title.empty()) script.title = trim(requirements.substr(0, requirements.find('\n')));
        s = pipeline::run_session_script(engine, requirements, script);
      } else {
        if (run_title.empty()) run_title = trim(requirements.substr(0, requirements.find('\n')));
        s = engine.start_session({"", run_title, requirements});
        if (!interactive_session(engine, s, in, err)) {
          err << "session abandoned at stage " << pipeline::stage_name(s.stage) << '\n';
          return 1;
        }
      }
      auto content = pipeline::export_session(s, export_format == "puml" ? pipeline::ExportFormat::puml : pipeline::ExportFormat::json);
      if (!out_file.empty()) {
        write_file(out_file, content);
        if (json_mode) out << nlohmann::json{{"session_id", s.id}, {"stage", s.stage}, {"out", out_file}}.dump() << '\n';
        else err << "wrote " << out_file << " (stage " << pipeline::stage_name(s.stage) << ")\n";
      } else if (json_mode && export_format == "puml") {
        out << nlohmann::json{{"source", content}}.dump() << '\n';
      } else {
        out << content;
      }
      return 0;
    }

    if (*render) {
      auto m = read_model_file(model_file);
      require_valid(m);
      auto src = plantuml::render_model(m).text;
      if (json_mode) out << nlohmann::json{{"source", src}}.dump() << '\n';
      else out << src;
      return 0;
    }

    if (*parse) {
      auto m = plantuml::parse_model(read_file(puml_file));
      out << nlohmann::json(m).dump(json_mode ? -1 : 2) << '\n';
      return 0;
    }

    if (*lint) {
      auto findings = plantuml::lint(read_file(puml_file));
      bool errors = plantuml::has_errors(findings);
      if (json_mode) out << nlohmann::json{{"findings", findings}, {"errors", errors}}.dump() << '\n';
      else out << lint_text(findings);
      return errors ? 1 : 0;
    }

    if (*evalc) {
      eval::MatcherConfig mc;
      if (!overrides_file.empty()) mc = read_json_file(overrides_file).get<eval::MatcherConfig>();
      auto report = eval::score_model(read_model_file(truth_file), read_model_file(candidate_file), mc);
      if (json_mode) out << nlohmann::json(report).dump() << '\n';
      else out << eval_text(report);
      return report.any_undefined() ? 1 : 0;
    }

    if (*stats) {
      auto report = eval::analyze_timings(eval::parse_timing_csv(read_file(times_file)), alpha);
      if (json_mode) out << nlohmann::json(report).dump() << '\n';
      else out << stats_text(report);
      return 0;
    }

    if (*serve) {
      scfg = service::service_config_from_env(scfg, !g.data_dir.empty());
      if (!g.data_dir.empty()) scfg.data_dir = g.data_dir;
      service::Service svc(scfg, make_provider(g));
      int port = svc.bind();
      err << "listening on http://" << scfg.host << ":" << port << " (data in " << scfg.data_dir.string() << ")\n";
      svc.listen();
      return 0;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    report_error(err, g.output, e);
    return 1;
  } catch (const std::exception& e) {
    report_error(err, g.output, Error("E-INTERNAL", e.what()));
    return 1;
  }
  return 2;
}

}  // namespace ucm::cli
