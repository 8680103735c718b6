#pragma once

// Helpers shared by the unit suites and the acceptance binary: random
// knowledge bases, brute-force graph checks and small numeric utilities.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "mekb/engine.hpp"
#include "mekb/hypertree.hpp"
#include "mekb/knowledge_base.hpp"
#include "mekb/model.hpp"
#include "mekb/parser.hpp"

namespace mekb::testing {

inline KnowledgeBase compile_text(std::string_view text) { return compile(parse_kb(text)); }

inline Schema boolean_schema(std::size_t n) {
  Schema s;
  for (std::size_t i = 0; i < n; ++i) s.add(Variable::boolean("V" + std::to_string(i)));
  return s;
}

inline Sentence literal(VarId v, bool positive) {
  return Sentence::atom(Atom{v, Comparator::kEq, {positive ? ValueIndex{1} : ValueIndex{0}}});
}

// Random formula over exactly the given boolean variables.
inline Sentence random_formula(std::mt19937_64& rng, const std::vector<VarId>& vars) {
  std::bernoulli_distribution coin(0.5);
  Sentence s = literal(vars[0], coin(rng));
  for (std::size_t i = 1; i < vars.size(); ++i) {
    Sentence l = literal(vars[i], coin(rng));
    s = coin(rng) ? Sentence::conj(s, l) : Sentence::disj(s, l);
  }
  if (std::bernoulli_distribution(0.15)(rng)) s = Sentence::negate(s);
  return s;
}

inline std::vector<VarId> pick_vars(std::mt19937_64& rng, std::size_t n, std::size_t k) {
  std::vector<VarId> all(n);
  std::iota(all.begin(), all.end(), VarId{0});
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(k);
  return all;
}

inline Table random_positive_joint(std::mt19937_64& rng, const Scope& scope) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Table t(scope);
  for (double& x : t.cells()) x = u(rng);
  t.normalize();
  return t;
}

struct RandomKb {
  Schema schema;
  std::vector<Rule> rules;
  Table joint;  // the positive joint the targets were read from
};

// Float rules whose targets are conditionals of a random strictly positive
// joint, so the set is always consistent.
inline RandomKb random_consistent_kb(std::mt19937_64& rng, std::size_t max_vars, std::size_t max_rules,
                                     std::size_t max_cluster = 3) {
  RandomKb kb;
  const std::size_t n = std::uniform_int_distribution<std::size_t>(2, max_vars)(rng);
  kb.schema = boolean_schema(n);
  kb.joint = random_positive_joint(rng, Scope::full(kb.schema));
  const std::size_t m = std::uniform_int_distribution<std::size_t>(1, max_rules)(rng);
  while (kb.rules.size() < m) {
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, std::min(max_cluster, n))(rng);
    const auto vars = pick_vars(rng, n, k);
    const std::size_t p = std::uniform_int_distribution<std::size_t>(0, k - 1)(rng);
    Rule r;
    r.id = default_rule_id(kb.rules.size());
    if (p > 0) r.premise = random_formula(rng, {vars.begin(), vars.begin() + p});
    r.conclusion = random_formula(rng, {vars.begin() + p, vars.end()});
    r.target = conditional_probability(kb.joint, r.conclusion, r.premise);
    if (r.target < 0.02 || r.target > 0.98) continue;
    kb.rules.push_back(std::move(r));
  }
  return kb;
}

// Rules with random clusters over n variables; targets are irrelevant.
inline std::vector<Rule> random_structure_rules(std::mt19937_64& rng, std::size_t n, std::size_t count,
                                                std::size_t max_cluster) {
  std::vector<Rule> rules;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, std::min(max_cluster, n))(rng);
    Rule r;
    r.id = default_rule_id(i);
    r.conclusion = random_formula(rng, pick_vars(rng, n, k));
    r.target = 0.5;
    rules.push_back(std::move(r));
  }
  return rules;
}

// Chordal by definition: no induced subgraph on 4 or more vertices is a
// cycle. Enumerates every vertex subset, so keep n small.
inline bool chordal_by_brute_force(const UndirectedGraph& g) {
  const std::size_t n = g.vertex_count();
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    if (std::popcount(mask) < 4) continue;
    std::vector<std::size_t> vs;
    for (std::size_t v = 0; v < n; ++v)
      if (mask & (1u << v)) vs.push_back(v);
    bool all_degree_two = true;
    for (std::size_t v : vs) {
      std::size_t deg = 0;
      for (std::size_t u : vs) deg += g.has_edge(u, v);
      if (deg != 2) {
        all_degree_two = false;
        break;
      }
    }
    if (!all_degree_two) continue;
    // 2-regular: a chordless cycle iff connected.
    std::vector<char> seen(n, 0);
    std::vector<std::size_t> stack{vs[0]};
    seen[vs[0]] = 1;
    std::size_t reached = 1;
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      for (std::size_t w : vs)
        if (!seen[w] && g.has_edge(u, w)) {
          seen[w] = 1;
          ++reached;
          stack.push_back(w);
        }
    }
    if (reached == vs.size()) return false;
  }
  return true;
}

// For every variable, the hyperedges holding it induce a connected subtree.
inline bool running_intersection_by_search(const Hypertree& ht) {
  const auto adj = ht.adjacency();
  std::set<VarId> all;
  for (const auto& h : ht.hyperedges) all.insert(h.begin(), h.end());
  for (VarId v : all) {
    std::vector<std::size_t> holders;
    for (std::size_t i = 0; i < ht.size(); ++i)
      if (std::binary_search(ht.hyperedges[i].begin(), ht.hyperedges[i].end(), v)) holders.push_back(i);
    std::vector<char> seen(ht.size(), 0);
    std::vector<std::size_t> stack{holders[0]};
    seen[holders[0]] = 1;
    std::size_t reached = 1;
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      for (auto [w, e] : adj[u]) {
        (void)e;
        if (seen[w] || !std::binary_search(ht.hyperedges[w].begin(), ht.hyperedges[w].end(), v)) continue;
        seen[w] = 1;
        ++reached;
        stack.push_back(w);
      }
    }
    if (reached != holders.size()) return false;
  }
  return true;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

// Plain sum -p ld p, written out independently of the library.
inline double direct_entropy_bits(std::span<const double> p) {
  double h = 0.0;
  for (double x : p)
    if (x > 0.0) h -= x * std::log2(x);
  return h;
}

inline double chi_square_sf(double x, double dof) {
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(dof), x));
}

}  // namespace mekb::testing
