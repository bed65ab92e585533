#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ucm/core/text.hpp"
#include "ucm/error.hpp"
#include "ucm/eval/stats.hpp"

namespace ucm::eval {

enum class Condition { manual, llm };

struct TimingRow {
  std::string participant;
  Condition condition = Condition::manual;
  double minutes = 0.0;
};

/// Parses `participant,condition,minutes` CSV (header required).
inline std::vector<TimingRow> parse_timing_csv(std::string_view csv) {
  auto lines = text::split_lines(csv);
  std::size_t i = 0;
  while (i < lines.size() && text::is_blank(lines[i])) ++i;
  if (i == lines.size() || text::to_lower(text::collapse_whitespace(lines[i])) != "participant,condition,minutes") {
    throw Error("E-CSV", "expected header 'participant,condition,minutes'", {{"line", static_cast<int>(i) + 1}});
  }
  std::vector<TimingRow> rows;
  for (++i; i < lines.size(); ++i) {
    const int lineno = static_cast<int>(i) + 1;
    if (text::is_blank(lines[i])) continue;
    std::vector<std::string> cells;
    std::stringstream ss(lines[i]);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(text::trim(cell));
    if (cells.size() != 3) throw Error("E-CSV", "line " + std::to_string(lineno) + ": expected 3 fields", {{"line", lineno}});

    TimingRow row;
    row.participant = cells[0];
    const std::string cond = text::to_lower(cells[1]);
    if (cond == "manual") {
      row.condition = Condition::manual;
    } else if (cond == "llm" || cond == "llm-based") {
      row.condition = Condition::llm;
    } else {
      throw Error("E-CSV", "line " + std::to_string(lineno) + ": unknown condition '" + cells[1] + "'", {{"line", lineno}});
    }
    try {
      std::size_t used = 0;
      row.minutes = std::stod(cells[2], &used);
      if (used != cells[2].size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw Error("E-CSV", "line " + std::to_string(lineno) + ": minutes '" + cells[2] + "' is not a number", {{"line", lineno}});
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

struct TimeReduction {
  double mean_manual = 0.0;
  double mean_assisted = 0.0;
  double reduction_pct = 0.0;  // fraction: 1 - mean_assisted / mean_manual
};

inline TimeReduction time_reduction(std::span<const double> manual, std::span<const double> assisted) {
  if (manual.empty() || assisted.empty()) throw Error("E-EMPTY", "time lists must be non-empty");
  TimeReduction r;
  r.mean_manual = stats::mean(manual);
  r.mean_assisted = stats::mean(assisted);
  if (r.mean_manual == 0.0) throw Error("E-ZERO-MEAN", "mean manual time is zero");
  r.reduction_pct = 1.0 - r.mean_assisted / r.mean_manual;
  return r;
}

struct StatsReport {
  std::size_t n = 0;
  double mean_manual = 0.0;
  double mean_assisted = 0.0;
  double reduction_pct = 0.0;
  double shapiro_w = 0.0;
  double shapiro_p = 0.0;
  double t_stat = 0.0;
  double df = 0.0;
  double p_value = 1.0;
  double alpha = 0.01;

  bool significant() const { return p_value < alpha; }
  bool normality_not_rejected() const { return shapiro_p > 0.05; }
};

inline void to_json(nlohmann::json& j, const StatsReport& r) {
  j = {{"n", r.n},
       {"mean_manual", r.mean_manual},
       {"mean_assisted", r.mean_assisted},
       {"reduction_pct", r.reduction_pct},
       {"shapiro_w", r.shapiro_w},
       {"shapiro_p", r.shapiro_p},
       {"t_stat", r.t_stat},
       {"df", r.df},
       {"p_value", r.p_value},
       {"alpha", r.alpha},
       {"significant", r.significant()},
       {"normality_not_rejected", r.normality_not_rejected()}};
}

/// Pairs rows by participant (manual minus LLM-assisted) and runs the full
/// analysis: mean reduction, Shapiro-Wilk on the differences, paired t-test.
inline StatsReport analyze_timings(const std::vector<TimingRow>& rows, double alpha = 0.01) {
  std::map<std::string, std::pair<std::optional<double>, std::optional<double>>> by_participant;
  for (const auto& r : rows) {
    auto& slot = r.condition == Condition::manual ? by_participant[r.participant].first : by_participant[r.participant].second;
    if (slot) throw Error("E-CSV", "participant '" + r.participant + "' has two rows for the same condition");
    slot = r.minutes;
  }
  std::vector<double> manual, assisted, diffs;
  for (const auto& [p, pair] : by_participant) {
    if (!pair.first || !pair.second) throw Error("E-UNPAIRED", "participant '" + p + "' lacks a manual or llm row");
    manual.push_back(*pair.first);
    assisted.push_back(*pair.second);
    diffs.push_back(*pair.first - *pair.second);
  }

  StatsReport r;
  r.n = manual.size();
  r.alpha = alpha;
  auto tr = time_reduction(manual, assisted);
  r.mean_manual = tr.mean_manual;
  r.mean_assisted = tr.mean_assisted;
  r.reduction_pct = tr.reduction_pct;
  auto sw = stats::shapiro_wilk(diffs);
  r.shapiro_w = sw.w;
  r.shapiro_p = sw.p;
  auto tt = stats::paired_t_test(manual, assisted);
  r.t_stat = tt.t;
  r.df = tt.df;
  r.p_value = tt.p_two_tailed;
  return r;
}

}  // namespace ucm::eval
