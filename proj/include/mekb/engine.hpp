#pragma once

// Factored distribution: one normalised marginal table (LEG) per hyperedge,
// kept calibrated by separator propagation. Also the explicit-joint bridge
// and the explicit-joint projection oracle.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mekb/error.hpp"
#include "mekb/hypertree.hpp"
#include "mekb/model.hpp"
#include "mekb/parser.hpp"
#include "mekb/projection.hpp"

namespace mekb {

inline constexpr std::size_t kDefaultOracleCap = std::size_t{1} << 20;

class FactoredDistribution {
 public:
  FactoredDistribution() = default;
  FactoredDistribution(std::shared_ptr<const Hypertree> tree, std::vector<Table> legs)
      : tree_(std::move(tree)), legs_(std::move(legs)) {
    if (!tree_ || legs_.size() != tree_->size())
      throw Error(ErrorKind::kInternal, "one table per hyperedge is required");
  }

  const Hypertree& tree() const { return *tree_; }
  const std::shared_ptr<const Hypertree>& tree_ptr() const { return tree_; }
  std::size_t size() const { return legs_.size(); }
  const Table& leg(std::size_t i) const { return legs_.at(i); }
  Table& leg(std::size_t i) { return legs_.at(i); }
  const std::vector<Table>& legs() const { return legs_; }

  bool operator==(const FactoredDistribution& o) const {
    return *tree_ == *o.tree_ && legs_ == o.legs_;
  }

 private:
  std::shared_ptr<const Hypertree> tree_;
  std::vector<Table> legs_;
};

inline Scope scope_of(const VarSet& vars, const Schema& schema) { return Scope(vars, schema); }

inline FactoredDistribution init_uniform(std::shared_ptr<const Hypertree> tree, const Schema& schema) {
  std::vector<Table> legs;
  for (const VarSet& h : tree->hyperedges) legs.push_back(Table::uniform(scope_of(h, schema)));
  return FactoredDistribution(std::move(tree), std::move(legs));
}

namespace detail {

// target := target * (s_new / s_old) on the separator scope, 0/0 = 0.
inline void rescale_by_separator(Table& target, const Table& s_new, const Table& s_old) {
  const auto map = target.scope().projection_map(s_new.scope());
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double num = s_new[map[i]];
    const double den = s_old[map[i]];
    if (den > 0.0) {
      target[i] *= num / den;
    } else if (num > 0.0) {
      throw Error(ErrorKind::kPropagationSupport,
                  "update puts mass on a separator configuration with zero support");
    } else {
      target[i] = 0.0;
    }
  }
}

}  // namespace detail

// Pushes a change of LEG `source` through the tree breadth-first. All other
// LEGs must be calibrated among themselves beforehand.
inline void propagate_from(FactoredDistribution& dist, std::size_t source) {
  const Hypertree& ht = dist.tree();
  for (const auto& [node, edge] : ht.bfs(source)) {
    if (!edge) continue;
    const auto [a, b] = ht.edges[*edge];
    const std::size_t sender = a == node ? b : a;
    const std::vector<VarId>& sep = ht.separators[*edge];
    const Table s_new = dist.leg(sender).marginal(sep);
    const Table s_old = dist.leg(node).marginal(sep);
    detail::rescale_by_separator(dist.leg(node), s_new, s_old);
    dist.leg(node).normalize();
  }
}

// Smallest connected set of hyperedges whose union covers `vars`: the whole
// tree with redundant leaves pruned repeatedly.
inline std::vector<std::size_t> covering_subtree(const Hypertree& ht, const VarSet& vars) {
  if (auto one = ht.covering(vars)) return {*one};
  const auto adj = ht.adjacency();
  std::vector<char> alive(ht.size(), 1);
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t h = 0; h < ht.size(); ++h) {
      if (!alive[h]) continue;
      std::size_t degree = 0, neighbor = 0;
      for (auto [v, e] : adj[h])
        if (alive[v]) {
          ++degree;
          neighbor = v;
        }
      if (degree > 1) continue;
      if (degree == 0) continue;  // last node standing
      // Running intersection: a variable of a leaf that is elsewhere in the
      // remaining subtree is also in its single neighbour.
      bool needed = false;
      for (VarId v : vars)
        if (std::binary_search(ht.hyperedges[h].begin(), ht.hyperedges[h].end(), v) &&
            !std::binary_search(ht.hyperedges[neighbor].begin(), ht.hyperedges[neighbor].end(), v))
          needed = true;
      if (!needed) {
        alive[h] = 0;
        changed = true;
      }
    }
  }
  std::vector<std::size_t> out;
  for (std::size_t h = 0; h < ht.size(); ++h)
    if (alive[h]) out.push_back(h);
  return out;
}

// Explicit table over the union of `nodes` (a connected subtree): product of
// member LEGs divided by the separators inside the subtree.
inline Table join_subtree(const FactoredDistribution& dist, const std::vector<std::size_t>& nodes,
                          std::size_t cap = kDefaultOracleCap) {
  const Hypertree& ht = dist.tree();
  std::vector<char> member(ht.size(), 0);
  for (std::size_t n : nodes) member.at(n) = 1;
  std::size_t cells = 1;
  VarSet all;
  for (std::size_t n : nodes) all = set_union(all, ht.hyperedges[n]);
  Table acc = dist.leg(nodes.front());
  std::vector<char> done(ht.size(), 0);
  done[nodes.front()] = 1;
  for (const auto& [node, edge] : ht.bfs(nodes.front())) {
    if (!edge || !member[node]) continue;
    const auto [a, b] = ht.edges[*edge];
    const std::size_t from = a == node ? b : a;
    if (!done[from]) continue;  // path leaves the subtree
    done[node] = 1;
    const Table& leg = dist.leg(node);
    VarSet vars = set_union(acc.scope().vars(), leg.scope().vars());
    std::vector<std::size_t> cards;
    for (VarId v : vars) {
      auto p = acc.scope().position(v);
      cards.push_back(p ? acc.scope().cards()[*p] : leg.scope().cards()[*leg.scope().position(v)]);
    }
    cells = 1;
    for (std::size_t c : cards) {
      if (cells > cap / c) throw Error(ErrorKind::kCapacity, "joined table exceeds the cell cap");
      cells *= c;
    }
    Table out(Scope(vars, cards));
    const Table sep = leg.marginal(ht.separators[*edge]);
    const auto to_acc = out.scope().projection_map(acc.scope());
    const auto to_leg = out.scope().projection_map(leg.scope());
    const auto to_sep = out.scope().projection_map(sep.scope());
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double d = sep[to_sep[i]];
      out[i] = d > 0.0 ? acc[to_acc[i]] * leg[to_leg[i]] / d : 0.0;
    }
    acc = std::move(out);
  }
  for (std::size_t n : nodes)
    if (!done[n]) throw Error(ErrorKind::kInternal, "join over a disconnected hyperedge set");
  return acc;
}

inline double query_sentence(const FactoredDistribution& dist, const Sentence& s) {
  const VarSet vars = variables_of(s);
  if (vars.empty()) return 1.0;
  const Hypertree& ht = dist.tree();
  if (auto home = ht.covering(vars)) return sentence_probability(dist.leg(*home), s);
  return sentence_probability(join_subtree(dist, covering_subtree(ht, vars)), s);
}

// P(conclusion | premise) on the factored distribution.
inline double query_conditional(const FactoredDistribution& dist, const Sentence& conclusion,
                                const Sentence& premise, const Schema* schema = nullptr) {
  if (premise.is_taut()) return query_sentence(dist, conclusion);
  const VarSet vars = set_union(variables_of(conclusion), variables_of(premise));
  const Hypertree& ht = dist.tree();
  auto home = ht.covering(vars);
  if (home) return conditional_probability(dist.leg(*home), conclusion, premise, schema);
  return conditional_probability(join_subtree(dist, covering_subtree(ht, vars)), conclusion,
                                 premise, schema);
}

// joint(v) = prod LEG(v) / prod separator(v), over all schema variables in
// declaration order.
inline JointTable to_explicit_joint(const FactoredDistribution& dist, const Schema& schema,
                                    std::size_t cap = kDefaultOracleCap) {
  const Scope full = Scope::full(schema);
  if (full.cell_count() > cap)
    throw Error(ErrorKind::kCapacity, "explicit joint has " + std::to_string(full.cell_count()) +
                                          " worlds, above the cap of " + std::to_string(cap));
  if (dist.size() == 0) return Table::uniform(full);
  std::vector<std::size_t> nodes(dist.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) nodes[i] = i;
  Table joint = join_subtree(dist, nodes, cap);
  if (!(joint.scope() == full)) joint = joint.marginal(full);
  joint.normalize();
  return joint;
}

// Copy of `dist` in which the connected hyperedges `nodes` are contracted to
// a single hyperedge holding their joined table. Used for constraints whose
// cluster no single hyperedge covers.
inline FactoredDistribution merge_subtree(const FactoredDistribution& dist,
                                          std::vector<std::size_t> nodes,
                                          const std::vector<VarSet>& clusters,
                                          std::size_t cap = kDefaultOracleCap) {
  std::sort(nodes.begin(), nodes.end());
  const Hypertree& ht = dist.tree();
  Table merged = join_subtree(dist, nodes, cap);
  std::vector<char> member(ht.size(), 0);
  for (std::size_t n : nodes) member[n] = 1;
  const std::size_t keep = nodes.front();
  std::vector<std::size_t> remap(ht.size());
  Hypertree out;
  std::vector<Table> legs;
  for (std::size_t h = 0; h < ht.size(); ++h) {
    if (member[h] && h != keep) continue;
    remap[h] = out.hyperedges.size();
    out.hyperedges.push_back(h == keep ? merged.scope().vars() : ht.hyperedges[h]);
    legs.push_back(h == keep ? merged : dist.leg(h));
  }
  for (std::size_t n : nodes) remap[n] = remap[keep];
  for (std::size_t e = 0; e < ht.edges.size(); ++e) {
    const auto [a, b] = ht.edges[e];
    if (member[a] && member[b]) continue;
    out.edges.emplace_back(remap[a], remap[b]);
    out.separators.push_back(ht.separators[e]);
  }
  for (const VarSet& c : clusters) {
    auto home = out.covering(c);
    if (!home) throw Error(ErrorKind::kInternal, "cluster not covered after merge");
    out.homes.push_back(*home);
  }
  return FactoredDistribution(std::make_shared<const Hypertree>(std::move(out)), std::move(legs));
}

// ---------------------------------------------------------------------------
// Explicit-joint oracle

struct OracleResult {
  JointTable joint;
  bool converged = false;
  std::size_t sweeps = 0;
  double max_residual = 0.0;
};

// Cyclic single-rule projections applied straight to an explicit joint, no
// hypertree involved. Infeasible rules throw kInfeasibleRule.
inline OracleResult oracle_project(JointTable p0, const std::vector<Rule>& rules, double tolerance,
                                   std::size_t max_sweeps) {
  struct Masks {
    std::vector<std::uint8_t> premise, conclusion;
  };
  std::vector<Masks> masks;
  for (const Rule& r : rules)
    masks.push_back({truth_table(p0.scope(), r.premise), truth_table(p0.scope(), r.conclusion)});
  auto max_residual = [&](const JointTable& p) {
    double worst = 0.0;
    for (std::size_t i = 0; i < rules.size(); ++i) {
      const RuleMasses m = rule_masses(p.cells(), masks[i].premise, masks[i].conclusion);
      const double achieved = m.premise() > 0.0 ? m.both / m.premise() : 0.0;
      worst = std::max(worst, m.premise() > 0.0 ? std::abs(achieved - rules[i].target) : 1.0);
    }
    return worst;
  };
  OracleResult out;
  out.joint = std::move(p0);
  out.max_residual = max_residual(out.joint);
  if (rules.empty() || out.max_residual <= tolerance) {
    out.converged = true;
    return out;
  }
  for (out.sweeps = 1; out.sweeps <= max_sweeps; ++out.sweeps) {
    for (std::size_t i = 0; i < rules.size(); ++i)
      project_cells(out.joint.cells(), masks[i].premise, masks[i].conclusion, rules[i].target,
                    rules[i].mode, rules[i].id);
    out.max_residual = max_residual(out.joint);
    if (out.max_residual <= tolerance) {
      out.converged = true;
      return out;
    }
  }
  out.sweeps = max_sweeps;
  return out;
}

}  // namespace mekb
