#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "ucm/core/model.hpp"

namespace ucm::testgen {

/// Random valid models for property tests. Names deliberately carry stray
/// whitespace, quotes, parentheses and non-ASCII text.
class ModelGenerator {
 public:
  explicit ModelGenerator(std::uint32_t seed) : rng_(seed) {}

  UseCaseModel next() {
    UseCaseModel m;
    m.system_name = name(1, 3);
    const int n_actors = pick(0, 6);
    const int n_usecases = pick(0, 8);

    for (int i : shuffled_ids(n_actors)) {
      Actor a;
      a.id = "A" + std::to_string(i);
      a.name = name(1, 3);
      a.kind = static_cast<ActorKind>(pick(0, 2));
      m.actors.push_back(std::move(a));
    }
    for (int i : shuffled_ids(n_usecases)) {
      UseCase u;
      u.id = "UC" + std::to_string(i);
      u.title = name(1, 5);
      m.use_cases.push_back(std::move(u));
    }
    for (auto& u : m.use_cases) {
      for (const auto& a : m.actors) {
        if (pick(0, 2) == 0) {
          m.associations.push_back({a.id, u.id});
          if (pick(0, 5) == 0) m.associations.push_back({a.id, u.id});  // duplicate edge
          u.actor_ids.push_back(a.id);
        }
      }
    }
    if (m.use_cases.size() >= 2) {
      for (int k = pick(0, 3); k > 0; --k) {
        auto from = pick(0, static_cast<int>(m.use_cases.size()) - 1);
        auto to = pick(0, static_cast<int>(m.use_cases.size()) - 1);
        if (from == to) continue;
        m.relations.push_back({m.use_cases[from].id, m.use_cases[to].id,
                               pick(0, 1) ? RelationKind::include : RelationKind::extend});
      }
    }
    std::shuffle(m.associations.begin(), m.associations.end(), rng_);
    return m;
  }

  /// Ensures every use case has at least one association (when actors exist).
  UseCaseModel next_association_complete() {
    UseCaseModel m = next();
    if (m.actors.empty()) {
      m.use_cases.clear();
      m.relations.clear();
      m.associations.clear();
      return m;
    }
    for (auto& u : m.use_cases) {
      if (!u.actor_ids.empty()) continue;
      const auto& a = m.actors[pick(0, static_cast<int>(m.actors.size()) - 1)];
      u.actor_ids.push_back(a.id);
      m.associations.push_back({a.id, u.id});
    }
    return m;
  }

  int pick(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

 private:
  std::vector<int> shuffled_ids(int n) {
    std::vector<int> ids(n);
    std::iota(ids.begin(), ids.end(), 1);
    std::shuffle(ids.begin(), ids.end(), rng_);
    return ids;
  }

  std::string name(int min_words, int max_words) {
    static const std::vector<std::string> words{
        "Place", "order", "Customer", "admin", "Print", "report", "the", "of", "Bank", "ATM",
        "\"quoted\"", "(paren)", "Zoë", "café", "x-ray", "a/b", "it's", "50%", "{brace}", "<<tag>>"};
    static const std::vector<std::string> gaps{" ", " ", " ", "  ", "\t", " \n "};
    std::string out;
    if (pick(0, 4) == 0) out += " ";
    const int n = pick(min_words, max_words);
    for (int i = 0; i < n; ++i) {
      if (i > 0) out += gaps[pick(0, static_cast<int>(gaps.size()) - 1)];
      out += words[pick(0, static_cast<int>(words.size()) - 1)];
    }
    if (pick(0, 4) == 0) out += "  ";
    return out;
  }

  std::mt19937 rng_;
};

}  // namespace ucm::testgen
