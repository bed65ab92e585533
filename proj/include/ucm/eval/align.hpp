#pragma once

#include <algorithm>
#include <cctype>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ucm/core/text.hpp"

namespace ucm::eval {

struct MatcherConfig {
  double jaccard_threshold = 0.5;
  std::set<std::string> stopwords{"a", "an", "the", "to", "of", "and"};
  std::vector<std::pair<std::string, std::string>> synonym_map;
  std::vector<std::pair<std::string, std::string>> manual_overrides;  // (truth, candidate)
};

inline void from_json(const nlohmann::json& j, MatcherConfig& c) {
  c.jaccard_threshold = j.value("jaccard_threshold", c.jaccard_threshold);
  if (j.contains("stopwords")) c.stopwords = j.at("stopwords").get<std::set<std::string>>();
  if (j.contains("synonym_map")) c.synonym_map = j.at("synonym_map").get<decltype(c.synonym_map)>();
  if (j.contains("manual_overrides")) c.manual_overrides = j.at("manual_overrides").get<decltype(c.manual_overrides)>();
}

/// Lowercased word tokens with punctuation stripped and stopwords removed.
inline std::vector<std::string> tokens(std::string_view name, const std::set<std::string>& stopwords) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty() && !stopwords.count(cur)) out.push_back(cur);
    cur.clear();
  };
  for (char c : name) {
    auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || u >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(u)));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

inline std::string normalize_name(std::string_view name, const std::set<std::string>& stopwords) {
  auto toks = tokens(name, stopwords);
  if (toks.empty()) toks = tokens(name, {});  // a name made only of stopwords
  std::string out;
  for (const auto& t : toks) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

/// Normalizer with the default stopword set; shared by the pipeline for
/// exact-after-normalization name matching.
inline std::string normalize_name(std::string_view name) { return normalize_name(name, MatcherConfig{}.stopwords); }

inline double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::set<std::string> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  if (sa.empty() && sb.empty()) return 0.0;
  std::size_t inter = 0;
  for (const auto& t : sa) inter += sb.count(t);
  return static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
}

/// Similarity in [0, 1]: 1 for an override, a synonym pair or equal
/// normalized names; token-set Jaccard otherwise.
inline double similarity(std::string_view truth, std::string_view candidate, const MatcherConfig& cfg) {
  const std::string t_exact = text::collapse_whitespace(truth);
  const std::string c_exact = text::collapse_whitespace(candidate);
  for (const auto& [ot, oc] : cfg.manual_overrides) {
    if (text::collapse_whitespace(ot) == t_exact && text::collapse_whitespace(oc) == c_exact) return 1.0;
  }
  const std::string tn = normalize_name(truth, cfg.stopwords);
  const std::string cn = normalize_name(candidate, cfg.stopwords);
  if (!tn.empty() && tn == cn) return 1.0;
  for (const auto& [p, q] : cfg.synonym_map) {
    const std::string pn = normalize_name(p, cfg.stopwords);
    const std::string qn = normalize_name(q, cfg.stopwords);
    if ((tn == pn && cn == qn) || (tn == qn && cn == pn)) return 1.0;
  }
  return jaccard(tokens(truth, cfg.stopwords), tokens(candidate, cfg.stopwords));
}

struct Match {
  std::size_t truth = 0;
  std::size_t candidate = 0;
  double score = 0.0;
};

struct Alignment {
  std::vector<Match> matches;  // in acceptance order
  std::vector<std::size_t> unmatched_truth;
  std::vector<std::size_t> unmatched_candidate;
};

/// Greedy one-to-one matching: pairs scoring at least the threshold are
/// accepted in descending score order, ties broken by (truth, candidate) name.
inline Alignment align_elements(const std::vector<std::string>& truth, const std::vector<std::string>& candidate,
                                const MatcherConfig& cfg = {}) {
  std::vector<Match> pairs;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    for (std::size_t j = 0; j < candidate.size(); ++j) {
      double s = similarity(truth[i], candidate[j], cfg);
      if (s > 0.0 && s >= cfg.jaccard_threshold) pairs.push_back({i, j, s});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [&](const Match& l, const Match& r) {
    if (l.score != r.score) return l.score > r.score;
    return std::tie(truth[l.truth], candidate[l.candidate], l.truth, l.candidate) <
           std::tie(truth[r.truth], candidate[r.candidate], r.truth, r.candidate);
  });

  Alignment out;
  std::vector<bool> t_used(truth.size()), c_used(candidate.size());
  for (const auto& p : pairs) {
    if (t_used[p.truth] || c_used[p.candidate]) continue;
    t_used[p.truth] = c_used[p.candidate] = true;
    out.matches.push_back(p);
  }
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!t_used[i]) out.unmatched_truth.push_back(i);
  }
  for (std::size_t j = 0; j < candidate.size(); ++j) {
    if (!c_used[j]) out.unmatched_candidate.push_back(j);
  }
  return out;
}

}  // namespace ucm::eval
