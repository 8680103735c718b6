#pragma once

// Cluster hypergraph, triangulation (minimum fill-in or maximum cardinality
// search) and junction-tree construction; graph exports.

#include <algorithm>
#include <cstddef>
#include <deque>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "mekb/error.hpp"
#include "mekb/model.hpp"
#include "mekb/parser.hpp"

namespace mekb {

using VarSet = std::vector<VarId>;  // sorted, unique

inline VarSet set_union(const VarSet& a, const VarSet& b) {
  VarSet out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

inline VarSet set_intersection(const VarSet& a, const VarSet& b) {
  VarSet out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

inline bool is_subset(const VarSet& a, const VarSet& b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

inline VarSet cluster_of(const Rule& r) {
  return set_union(variables_of(r.premise), variables_of(r.conclusion));
}

class UndirectedGraph {
 public:
  UndirectedGraph() = default;
  explicit UndirectedGraph(std::size_t n) : n_(n), adj_(n, std::vector<char>(n, 0)) {}

  std::size_t vertex_count() const { return n_; }

  void add_edge(std::size_t a, std::size_t b) {
    if (a == b) return;
    adj_[a][b] = adj_[b][a] = 1;
  }
  bool has_edge(std::size_t a, std::size_t b) const { return adj_[a][b] != 0; }

  std::vector<std::size_t> neighbors(std::size_t v) const {
    std::vector<std::size_t> out;
    for (std::size_t u = 0; u < n_; ++u)
      if (adj_[v][u]) out.push_back(u);
    return out;
  }

  std::vector<std::pair<std::size_t, std::size_t>> edges() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t a = 0; a < n_; ++a)
      for (std::size_t b = a + 1; b < n_; ++b)
        if (adj_[a][b]) out.emplace_back(a, b);
    return out;
  }

  std::size_t edge_count() const { return edges().size(); }

  bool operator==(const UndirectedGraph&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::vector<char>> adj_;
};

struct MixedGraph {
  std::size_t vertex_count = 0;
  std::vector<std::pair<VarId, VarId>> arrows;      // premise var -> conclusion var
  std::vector<std::pair<VarId, VarId>> undirected;  // (a, b) with a < b
};

struct ClusterHypergraph {
  std::size_t vertex_count = 0;
  std::vector<VarSet> hyperedges;
};

// One hyperedge per rule in rule order, then a singleton for every variable
// that no rule mentions.
inline ClusterHypergraph clusters_from_rules(const std::vector<Rule>& rules,
                                             std::size_t variable_count) {
  ClusterHypergraph h;
  h.vertex_count = variable_count;
  std::vector<char> used(variable_count, 0);
  for (const Rule& r : rules) {
    VarSet c = cluster_of(r);
    for (VarId v : c) used.at(v) = 1;
    h.hyperedges.push_back(std::move(c));
  }
  for (VarId v = 0; v < variable_count; ++v)
    if (!used[v]) h.hyperedges.push_back({v});
  return h;
}

inline UndirectedGraph dependency_graph(const std::vector<Rule>& rules,
                                        std::size_t variable_count) {
  UndirectedGraph g(variable_count);
  for (const Rule& r : rules) {
    const VarSet c = cluster_of(r);
    for (std::size_t i = 0; i < c.size(); ++i)
      for (std::size_t j = i + 1; j < c.size(); ++j) g.add_edge(c[i], c[j]);
  }
  return g;
}

inline MixedGraph mixed_graph(const std::vector<Rule>& rules, std::size_t variable_count) {
  std::set<std::pair<VarId, VarId>> arrows, undirected;
  for (const Rule& r : rules) {
    const VarSet prem = variables_of(r.premise);
    const VarSet conc = variables_of(r.conclusion);
    for (VarId a : prem)
      for (VarId b : conc)
        if (a != b) arrows.emplace(a, b);
    for (std::size_t i = 0; i < conc.size(); ++i)
      for (std::size_t j = i + 1; j < conc.size(); ++j) undirected.emplace(conc[i], conc[j]);
  }
  return MixedGraph{variable_count, {arrows.begin(), arrows.end()},
                    {undirected.begin(), undirected.end()}};
}

struct Triangulation {
  std::vector<VarId> elimination_order;
  UndirectedGraph chordal;
  std::vector<VarSet> cliques;  // maximal cliques, lexicographically sorted
  std::size_t fill_edges = 0;
};

namespace detail {

// Visit order of maximum cardinality search; ties go to the lowest index.
inline std::vector<std::size_t> mcs_visit_order(const UndirectedGraph& g) {
  const std::size_t n = g.vertex_count();
  std::vector<std::size_t> weight(n, 0), order;
  std::vector<char> done(n, 0);
  order.reserve(n);
  for (std::size_t step = 0; step < n; ++step) {
    std::size_t best = n;
    for (std::size_t v = 0; v < n; ++v)
      if (!done[v] && (best == n || weight[v] > weight[best])) best = v;
    done[best] = 1;
    order.push_back(best);
    for (std::size_t u = 0; u < n; ++u)
      if (!done[u] && g.has_edge(best, u)) ++weight[u];
  }
  return order;
}

inline std::vector<VarSet> maximal_sets(std::vector<VarSet> sets) {
  std::sort(sets.begin(), sets.end());
  sets.erase(std::unique(sets.begin(), sets.end()), sets.end());
  std::vector<VarSet> out;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    bool absorbed = false;
    for (std::size_t j = 0; j < sets.size() && !absorbed; ++j)
      absorbed = i != j && sets[i].size() < sets[j].size() && is_subset(sets[i], sets[j]);
    if (!absorbed) out.push_back(sets[i]);
  }
  return out;
}

}  // namespace detail

// Eliminates vertices in `order`, connecting the remaining neighbours of each.
inline Triangulation eliminate(const UndirectedGraph& g, std::vector<VarId> order) {
  const std::size_t n = g.vertex_count();
  Triangulation t;
  t.chordal = g;
  UndirectedGraph work = g;
  std::vector<char> gone(n, 0);
  std::vector<VarSet> cliques;
  for (VarId v : order) {
    VarSet clique{v};
    for (std::size_t u = 0; u < n; ++u)
      if (!gone[u] && work.has_edge(v, u)) clique.push_back(u);
    std::sort(clique.begin(), clique.end());
    for (std::size_t i = 0; i < clique.size(); ++i)
      for (std::size_t j = i + 1; j < clique.size(); ++j)
        if (!work.has_edge(clique[i], clique[j])) {
          work.add_edge(clique[i], clique[j]);
          t.chordal.add_edge(clique[i], clique[j]);
          ++t.fill_edges;
        }
    gone[v] = 1;
    cliques.push_back(std::move(clique));
  }
  t.elimination_order = std::move(order);
  t.cliques = detail::maximal_sets(std::move(cliques));
  return t;
}

// True iff the reverse MCS visit order is a perfect elimination ordering.
inline bool is_chordal(const UndirectedGraph& g) {
  auto order = detail::mcs_visit_order(g);
  std::reverse(order.begin(), order.end());
  const std::size_t n = g.vertex_count();
  std::vector<std::size_t> rank(n);
  for (std::size_t i = 0; i < n; ++i) rank[order[i]] = i;
  for (std::size_t v : order) {
    std::vector<std::size_t> later;
    for (std::size_t u : g.neighbors(v))
      if (rank[u] > rank[v]) later.push_back(u);
    for (std::size_t i = 0; i < later.size(); ++i)
      for (std::size_t j = i + 1; j < later.size(); ++j)
        if (!g.has_edge(later[i], later[j])) return false;
  }
  return true;
}

inline Triangulation triangulate(const UndirectedGraph& g, Heuristic heuristic) {
  const std::size_t n = g.vertex_count();
  std::vector<VarId> order;
  if (heuristic == Heuristic::kMaxCardinality) {
    order = detail::mcs_visit_order(g);
    std::reverse(order.begin(), order.end());
  } else {
    UndirectedGraph work = g;
    std::vector<char> gone(n, 0);
    for (std::size_t step = 0; step < n; ++step) {
      std::size_t best = n, best_fill = 0;
      for (std::size_t v = 0; v < n; ++v) {
        if (gone[v]) continue;
        std::vector<std::size_t> nb;
        for (std::size_t u = 0; u < n; ++u)
          if (!gone[u] && work.has_edge(v, u)) nb.push_back(u);
        std::size_t fill = 0;
        for (std::size_t i = 0; i < nb.size(); ++i)
          for (std::size_t j = i + 1; j < nb.size(); ++j)
            if (!work.has_edge(nb[i], nb[j])) ++fill;
        if (best == n || fill < best_fill) {
          best = v;
          best_fill = fill;
        }
      }
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b)
          if (!gone[a] && !gone[b] && work.has_edge(best, a) && work.has_edge(best, b))
            work.add_edge(a, b);
      gone[best] = 1;
      order.push_back(best);
    }
  }
  Triangulation t = eliminate(g, std::move(order));
  if (!is_chordal(t.chordal))
    throw Error(ErrorKind::kInternal, "triangulation produced a non-chordal graph");
  return t;
}

// Junction tree over variable clusters. Hyperedge 0 is the root; every tree
// edge is stored as (parent, child).
struct Hypertree {
  std::vector<VarSet> hyperedges;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::vector<VarSet> separators;  // per edge
  std::vector<std::size_t> homes;  // per input cluster: containing hyperedge

  std::size_t size() const { return hyperedges.size(); }

  // (neighbour, edge index) per hyperedge.
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adjacency() const {
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adj(hyperedges.size());
    for (std::size_t e = 0; e < edges.size(); ++e) {
      adj[edges[e].first].emplace_back(edges[e].second, e);
      adj[edges[e].second].emplace_back(edges[e].first, e);
    }
    return adj;
  }

  // Hyperedges in breadth-first order from `source` with the tree edge used
  // to reach each (none for the source).
  std::vector<std::pair<std::size_t, std::optional<std::size_t>>> bfs(std::size_t source) const {
    const auto adj = adjacency();
    std::vector<std::pair<std::size_t, std::optional<std::size_t>>> out;
    std::vector<char> seen(hyperedges.size(), 0);
    std::deque<std::size_t> q{source};
    seen[source] = 1;
    out.emplace_back(source, std::nullopt);
    while (!q.empty()) {
      const std::size_t u = q.front();
      q.pop_front();
      for (auto [v, e] : adj[u]) {
        if (seen[v]) continue;
        seen[v] = 1;
        out.emplace_back(v, e);
        q.push_back(v);
      }
    }
    return out;
  }

  // Smallest hyperedge containing `vars` (lowest index on ties).
  std::optional<std::size_t> covering(const VarSet& vars) const {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < hyperedges.size(); ++i)
      if (is_subset(vars, hyperedges[i]) &&
          (!best || hyperedges[i].size() < hyperedges[*best].size()))
        best = i;
    return best;
  }

  bool is_tree() const {
    if (hyperedges.empty()) return edges.empty();
    if (edges.size() != hyperedges.size() - 1) return false;
    return bfs(0).size() == hyperedges.size();
  }

  bool running_intersection() const {
    std::set<VarId> all;
    for (const auto& h : hyperedges) all.insert(h.begin(), h.end());
    for (VarId v : all) {
      std::size_t nodes = 0, links = 0;
      for (const auto& h : hyperedges) nodes += std::binary_search(h.begin(), h.end(), v);
      for (const auto& [a, b] : edges)
        links += std::binary_search(hyperedges[a].begin(), hyperedges[a].end(), v) &&
                 std::binary_search(hyperedges[b].begin(), hyperedges[b].end(), v);
      if (links + 1 != nodes) return false;
    }
    return true;
  }

  bool operator==(const Hypertree&) const = default;
};

namespace detail {

inline std::string set_label(const VarSet& s, const Schema* schema) {
  std::string out = "{";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += schema ? (*schema)[s[i]].name : std::to_string(s[i]);
  }
  return out + "}";
}

}  // namespace detail

// Maximum-weight spanning tree over the cliques (weight = separator size),
// grown from clique 0. Components that share no variable hang off the root
// with an empty separator.
inline Hypertree build_hypertree(std::vector<VarSet> cliques, const std::vector<VarSet>& clusters) {
  Hypertree ht;
  ht.hyperedges = detail::maximal_sets(std::move(cliques));
  const std::size_t n = ht.hyperedges.size();
  if (n == 0) {
    if (!clusters.empty()) throw Error(ErrorKind::kInternal, "clusters without cliques");
    return ht;
  }
  std::vector<char> in_tree(n, 0);
  in_tree[0] = 1;
  for (std::size_t added = 1; added < n; ++added) {
    std::size_t best_u = n, best_v = n, best_w = 0;
    for (std::size_t u = 0; u < n; ++u) {
      if (!in_tree[u]) continue;
      for (std::size_t v = 0; v < n; ++v) {
        if (in_tree[v]) continue;
        const std::size_t w = set_intersection(ht.hyperedges[u], ht.hyperedges[v]).size();
        if (w == 0) continue;
        // hyperedges are sorted, so index order is label order
        const bool better = w > best_w || (w == best_w && std::pair(u, v) < std::pair(best_u, best_v));
        if (better) {
          best_u = u;
          best_v = v;
          best_w = w;
        }
      }
    }
    if (best_w == 0) {
      best_u = 0;
      for (best_v = 0; in_tree[best_v]; ++best_v) {
      }
    }
    in_tree[best_v] = 1;
    ht.edges.emplace_back(best_u, best_v);
    ht.separators.push_back(set_intersection(ht.hyperedges[best_u], ht.hyperedges[best_v]));
  }
  if (!ht.running_intersection())
    throw Error(ErrorKind::kInternal, "hypertree violates the running-intersection property");
  for (const VarSet& c : clusters) {
    auto home = ht.covering(c);
    if (!home)
      throw Error(ErrorKind::kInternal,
                  "cluster " + detail::set_label(c, nullptr) + " is not inside any hyperedge");
    ht.homes.push_back(*home);
  }
  return ht;
}

// Clusters -> dependency graph -> triangulation -> junction tree.
inline Hypertree compile_structure(const std::vector<Rule>& rules, std::size_t variable_count,
                                   Heuristic heuristic) {
  const ClusterHypergraph h = clusters_from_rules(rules, variable_count);
  const Triangulation t = triangulate(dependency_graph(rules, variable_count), heuristic);
  return build_hypertree(t.cliques, h.hyperedges);
}

// ---------------------------------------------------------------------------
// Graph export

enum class GraphKind { kStructure, kDependency, kMixed };
enum class GraphFormat { kDot, kJson };

inline const char* to_string(GraphKind k) {
  switch (k) {
    case GraphKind::kStructure: return "structure";
    case GraphKind::kDependency: return "dependency";
    case GraphKind::kMixed: return "mixed";
  }
  return "?";
}

inline std::optional<GraphKind> parse_graph_kind(std::string_view s) {
  if (s == "structure") return GraphKind::kStructure;
  if (s == "dependency") return GraphKind::kDependency;
  if (s == "mixed") return GraphKind::kMixed;
  return std::nullopt;
}

// Graph document as JSON (see docs/graph.schema.json).
inline nlohmann::json graph_json(GraphKind kind, const Schema& schema,
                                 const std::vector<Rule>& rules, const Hypertree* ht) {
  using nlohmann::json;
  json doc = {{"kind", to_string(kind)}, {"nodes", json::array()}, {"edges", json::array()}};
  if (kind == GraphKind::kStructure) {
    if (!ht) throw Error(ErrorKind::kState, "structure graph requested before compilation");
    for (std::size_t i = 0; i < ht->size(); ++i) {
      json vars = json::array();
      for (VarId v : ht->hyperedges[i]) vars.push_back(schema[v].name);
      doc["nodes"].push_back({{"id", "H" + std::to_string(i)},
                              {"label", detail::set_label(ht->hyperedges[i], &schema)},
                              {"variables", vars}});
    }
    for (std::size_t e = 0; e < ht->edges.size(); ++e) {
      json sep = json::array();
      for (VarId v : ht->separators[e]) sep.push_back(schema[v].name);
      doc["edges"].push_back({{"source", "H" + std::to_string(ht->edges[e].first)},
                              {"target", "H" + std::to_string(ht->edges[e].second)},
                              {"type", "undirected"},
                              {"label", detail::set_label(ht->separators[e], &schema)},
                              {"separator", sep}});
    }
    return doc;
  }
  for (const Variable& v : schema)
    doc["nodes"].push_back({{"id", v.name}, {"label", v.name}, {"variables", {v.name}}});
  auto edge = [&](VarId a, VarId b, const char* type) {
    doc["edges"].push_back({{"source", schema[a].name}, {"target", schema[b].name}, {"type", type}});
  };
  if (kind == GraphKind::kDependency) {
    for (auto [a, b] : dependency_graph(rules, schema.size()).edges()) edge(a, b, "undirected");
  } else {
    const MixedGraph m = mixed_graph(rules, schema.size());
    for (auto [a, b] : m.arrows) edge(a, b, "arrow");
    for (auto [a, b] : m.undirected) edge(a, b, "undirected");
  }
  return doc;
}

inline std::string graph_dot(GraphKind kind, const Schema& schema, const std::vector<Rule>& rules,
                             const Hypertree* ht) {
  const nlohmann::json doc = graph_json(kind, schema, rules, ht);
  std::ostringstream out;
  const bool directed = kind == GraphKind::kMixed;
  out << (directed ? "digraph " : "graph ") << to_string(kind) << " {\n";
  for (const auto& node : doc["nodes"])
    out << "  \"" << node["id"].get<std::string>() << "\" [label=\""
        << node["label"].get<std::string>() << "\"];\n";
  for (const auto& e : doc["edges"]) {
    out << "  \"" << e["source"].get<std::string>() << "\" " << (directed ? "->" : "--") << " \""
        << e["target"].get<std::string>() << "\"";
    std::vector<std::string> attrs;
    if (directed && e["type"] == "undirected") attrs.push_back("dir=none");
    if (e.contains("label")) attrs.push_back("label=\"" + e["label"].get<std::string>() + "\"");
    if (!attrs.empty()) {
      out << " [";
      for (std::size_t i = 0; i < attrs.size(); ++i) out << (i ? ", " : "") << attrs[i];
      out << "]";
    }
    out << ";\n";
  }
  out << "}\n";
  return out.str();
}

inline std::string export_graph(GraphKind kind, GraphFormat format, const Schema& schema,
                                const std::vector<Rule>& rules, const Hypertree* ht) {
  if (format == GraphFormat::kDot) return graph_dot(kind, schema, rules, ht);
  return graph_json(kind, schema, rules, ht).dump(2) + "\n";
}

}  // namespace mekb
