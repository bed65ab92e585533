#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "ucm/core/model.hpp"
#include "ucm/eval/align.hpp"

namespace ucm::eval {

/// Half-up rounding for display. The small nudge keeps exact halves such as
/// 0.825 from rounding down because of binary representation error.
inline double round_display(double x, int digits = 2) {
  const double scale = std::pow(10.0, digits);
  return std::floor(x * scale + 0.5 + 1e-9) / scale;
}

struct Metrics {
  int tp = 0;
  int fp = 0;
  int fn = 0;
  std::optional<double> precision;  // nullopt = undefined (tp + fp == 0)
  std::optional<double> recall;
  std::optional<double> f1;

  static Metrics from_counts(int tp, int fp, int fn) {
    Metrics m{tp, fp, fn, {}, {}, {}};
    if (tp + fp > 0) m.precision = static_cast<double>(tp) / (tp + fp);
    if (tp + fn > 0) m.recall = static_cast<double>(tp) / (tp + fn);
    if (m.precision && m.recall && *m.precision + *m.recall > 0) {
      m.f1 = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
    }
    return m;
  }

  bool any_undefined() const { return !precision || !recall || !f1; }
};

struct MatchedPair {
  std::string truth_id;
  std::string candidate_id;
  double score = 0.0;
  bool operator==(const MatchedPair&) const = default;
};

struct ElementScore {
  Metrics metrics;
  std::vector<MatchedPair> matches;
  std::vector<std::string> unmatched_truth;
  std::vector<std::string> unmatched_candidate;
};

struct EvalReport {
  ElementScore actors;
  ElementScore use_cases;

  bool any_undefined() const { return actors.metrics.any_undefined() || use_cases.metrics.any_undefined(); }
};

inline nlohmann::json metric_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

inline void to_json(nlohmann::json& j, const Metrics& m) {
  j = {{"tp", m.tp}, {"fp", m.fp}, {"fn", m.fn}, {"precision", metric_json(m.precision)},
       {"recall", metric_json(m.recall)}, {"f1", metric_json(m.f1)}};
  auto undefined = nlohmann::json::array();
  if (!m.precision) undefined.push_back("precision");
  if (!m.recall) undefined.push_back("recall");
  if (!m.f1) undefined.push_back("f1");
  j["undefined"] = undefined;
  nlohmann::json rounded = nlohmann::json::object();
  if (m.precision) rounded["precision"] = round_display(*m.precision);
  if (m.recall) rounded["recall"] = round_display(*m.recall);
  if (m.f1) rounded["f1"] = round_display(*m.f1);
  j["display"] = rounded;
}

inline void to_json(nlohmann::json& j, const ElementScore& s) {
  auto matches = nlohmann::json::array();
  for (const auto& m : s.matches) matches.push_back({{"truth_id", m.truth_id}, {"candidate_id", m.candidate_id}, {"score", m.score}});
  j = s.metrics;
  j["matches"] = matches;
  j["unmatched_truth"] = s.unmatched_truth;
  j["unmatched_candidate"] = s.unmatched_candidate;
}

inline void to_json(nlohmann::json& j, const EvalReport& r) {
  j = {{"actor_metrics", r.actors}, {"usecase_metrics", r.use_cases}, {"any_undefined", r.any_undefined()}};
}

namespace detail {

template <typename Element, typename NameOf>
ElementScore score_elements(const std::vector<Element>& truth, const std::vector<Element>& candidate, NameOf name_of,
                            const MatcherConfig& cfg) {
  std::vector<std::string> t_names, c_names;
  for (const auto& e : truth) t_names.push_back(name_of(e));
  for (const auto& e : candidate) c_names.push_back(name_of(e));
  Alignment al = align_elements(t_names, c_names, cfg);

  ElementScore s;
  for (const auto& m : al.matches) s.matches.push_back({truth[m.truth].id, candidate[m.candidate].id, m.score});
  std::sort(s.matches.begin(), s.matches.end(), [](const MatchedPair& l, const MatchedPair& r) {
    return std::tie(l.truth_id, l.candidate_id) < std::tie(r.truth_id, r.candidate_id);
  });
  for (auto i : al.unmatched_truth) s.unmatched_truth.push_back(truth[i].id);
  for (auto j : al.unmatched_candidate) s.unmatched_candidate.push_back(candidate[j].id);
  const int tp = static_cast<int>(s.matches.size());
  s.metrics = Metrics::from_counts(tp, static_cast<int>(candidate.size()) - tp, static_cast<int>(truth.size()) - tp);
  return s;
}

}  // namespace detail

/// Scores actors and use cases independently. Relationships and
/// descriptions do not enter any count.
inline EvalReport score_model(const UseCaseModel& truth, const UseCaseModel& candidate, const MatcherConfig& cfg = {}) {
  require_valid(truth);
  require_valid(candidate);
  EvalReport r;
  r.actors = detail::score_elements(truth.actors, candidate.actors, [](const Actor& a) { return a.name; }, cfg);
  r.use_cases = detail::score_elements(truth.use_cases, candidate.use_cases, [](const UseCase& u) { return u.title; }, cfg);
  return r;
}

}  // namespace ucm::eval
