#include <gtest/gtest.h>

#include <random>

#include "mekb/hypertree.hpp"
#include "support/support.hpp"

using namespace mekb;

namespace {

UndirectedGraph graph(std::size_t n, std::initializer_list<std::pair<std::size_t, std::size_t>> edges) {
  UndirectedGraph g(n);
  for (auto [a, b] : edges) g.add_edge(a, b);
  return g;
}

std::size_t count_new_edges(const UndirectedGraph& before, const UndirectedGraph& after) {
  return after.edge_count() - before.edge_count();
}

}  // namespace

TEST(Triangulate, ChainNeedsNoFill) {
  const auto g = graph(3, {{0, 1}, {1, 2}});
  for (auto h : {Heuristic::kMinFill, Heuristic::kMaxCardinality}) {
    const Triangulation t = triangulate(g, h);
    EXPECT_EQ(t.fill_edges, 0u);
    EXPECT_EQ(t.cliques, (std::vector<VarSet>{{0, 1}, {1, 2}}));
  }
}

TEST(Triangulate, FourCycleGetsExactlyOneChord) {
  const auto g = graph(4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}});
  // brute force: adding either diagonal alone makes the 4-cycle chordal,
  // and without one it is not, so one chord is minimal
  EXPECT_FALSE(mekb::testing::chordal_by_brute_force(g));
  EXPECT_TRUE(mekb::testing::chordal_by_brute_force(graph(4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {0, 2}})));
  EXPECT_TRUE(mekb::testing::chordal_by_brute_force(graph(4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {1, 3}})));
  for (auto h : {Heuristic::kMinFill, Heuristic::kMaxCardinality}) {
    const Triangulation t = triangulate(g, h);
    EXPECT_EQ(t.fill_edges, 1u);
    EXPECT_EQ(count_new_edges(g, t.chordal), 1u);
    ASSERT_EQ(t.cliques.size(), 2u);
    for (const auto& c : t.cliques) EXPECT_EQ(c.size(), 3u);
  }
  // min-fill eliminates vertex 0 first (lowest index among equal fill)
  const Triangulation mf = triangulate(g, Heuristic::kMinFill);
  EXPECT_EQ(mf.elimination_order.front(), 0u);
  EXPECT_TRUE(mf.chordal.has_edge(1, 3));
}

TEST(Triangulate, TriangleIsUnchanged) {
  const auto g = graph(3, {{0, 1}, {1, 2}, {0, 2}});
  const Triangulation t = triangulate(g, Heuristic::kMinFill);
  EXPECT_EQ(t.fill_edges, 0u);
  EXPECT_EQ(t.cliques, (std::vector<VarSet>{{0, 1, 2}}));
}

TEST(Triangulate, IsolatedVerticesBecomeSingletonCliques) {
  const auto g = graph(3, {{0, 1}});
  const Triangulation t = triangulate(g, Heuristic::kMinFill);
  EXPECT_EQ(t.cliques, (std::vector<VarSet>{{0, 1}, {2}}));
}

TEST(Chordality, LibraryCheckAgreesWithBruteForce) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 400; ++trial) {
    const std::size_t n = 4 + trial % 7;
    UndirectedGraph g(n);
    std::bernoulli_distribution edge(0.35);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b)
        if (edge(rng)) g.add_edge(a, b);
    ASSERT_EQ(is_chordal(g), mekb::testing::chordal_by_brute_force(g)) << "trial " << trial;
  }
}

TEST(BuildHypertree, ChainHasOneSeparator) {
  const Hypertree ht = build_hypertree({{0, 1}, {1, 2}}, {{0, 1}, {1, 2}});
  ASSERT_EQ(ht.edges.size(), 1u);
  EXPECT_EQ(ht.separators[0], (VarSet{1}));
  EXPECT_EQ(ht.homes, (std::vector<std::size_t>{0, 1}));
}

TEST(BuildHypertree, SingleClique) {
  const Hypertree ht = build_hypertree({{0, 1, 2}}, {{0, 1, 2}, {0, 1}});
  EXPECT_EQ(ht.size(), 1u);
  EXPECT_TRUE(ht.edges.empty());
  EXPECT_EQ(ht.homes, (std::vector<std::size_t>{0, 0}));
}

TEST(BuildHypertree, FourCycleCliquesShareTwoVariables) {
  const auto g = graph(4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}});
  const Triangulation t = triangulate(g, Heuristic::kMinFill);
  const Hypertree ht = build_hypertree(t.cliques, {{0, 1}, {1, 2}, {2, 3}, {0, 3}});
  EXPECT_EQ(ht.size(), 2u);
  ASSERT_EQ(ht.separators.size(), 1u);
  EXPECT_EQ(ht.separators[0].size(), 2u);
}

TEST(BuildHypertree, NonMaximalCliquesAreAbsorbed) {
  const Hypertree ht = build_hypertree({{0, 1}, {0, 1, 2}, {2, 3}}, {});
  EXPECT_EQ(ht.hyperedges, (std::vector<VarSet>{{0, 1, 2}, {2, 3}}));
}

TEST(BuildHypertree, DisconnectedComponentsHangOffTheRoot) {
  const Hypertree ht = build_hypertree({{0, 1}, {2, 3}, {3, 4}}, {});
  EXPECT_TRUE(ht.is_tree());
  EXPECT_TRUE(ht.running_intersection());
  std::size_t empty = 0;
  for (const auto& s : ht.separators) empty += s.empty();
  EXPECT_EQ(empty, 1u);
}

TEST(BuildHypertree, UncoveredClusterIsInternalError) {
  EXPECT_THROW(build_hypertree({{0, 1}, {1, 2}}, {{0, 2}}), Error);
}

// Random rule sets: chordality by brute force, running intersection by
// search, cluster coverage, for both heuristics.
TEST(CompileStructure, RandomRuleSetsKeepAllInvariants) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + trial % 11;
    const auto rules = mekb::testing::random_structure_rules(rng, n, 1 + trial % 9, 4);
    for (auto h : {Heuristic::kMinFill, Heuristic::kMaxCardinality}) {
      const Triangulation t = triangulate(dependency_graph(rules, n), h);
      ASSERT_TRUE(mekb::testing::chordal_by_brute_force(t.chordal));
      const Hypertree ht = compile_structure(rules, n, h);
      ASSERT_TRUE(ht.is_tree());
      ASSERT_TRUE(mekb::testing::running_intersection_by_search(ht));
      const auto clusters = clusters_from_rules(rules, n).hyperedges;
      ASSERT_EQ(ht.homes.size(), clusters.size());
      for (std::size_t c = 0; c < clusters.size(); ++c)
        ASSERT_TRUE(is_subset(clusters[c], ht.hyperedges[ht.homes[c]]));
    }
  }
}

TEST(Graphs, DependencyGraphOfThreeVariableRuleIsATriangle) {
  Schema s;
  for (const char* n : {"A", "B", "C"}) s.add(Variable::boolean(n));
  const auto rules = std::vector<Rule>{parse_rule("[0.9] A & B => C", s)};
  const auto doc = graph_json(GraphKind::kDependency, s, rules, nullptr);
  EXPECT_EQ(doc["nodes"].size(), 3u);
  EXPECT_EQ(doc["edges"].size(), 3u);
}

TEST(Graphs, MixedGraphPointsFromPremiseToConclusion) {
  Schema s;
  for (const char* n : {"A", "B", "C"}) s.add(Variable::boolean(n));
  const auto rules = std::vector<Rule>{parse_rule("[0.9] A => B | C", s)};
  const MixedGraph m = mixed_graph(rules, 3);
  EXPECT_EQ(m.arrows, (std::vector<std::pair<VarId, VarId>>{{0, 1}, {0, 2}}));
  EXPECT_EQ(m.undirected, (std::vector<std::pair<VarId, VarId>>{{1, 2}}));
  const std::string dot = graph_dot(GraphKind::kMixed, s, rules, nullptr);
  EXPECT_NE(dot.find("\"A\" -> \"B\""), std::string::npos);
  EXPECT_NE(dot.find("dir=none"), std::string::npos);
}

TEST(Graphs, StructureGraphNeedsAHypertree) {
  Schema s;
  s.add(Variable::boolean("A"));
  try {
    graph_json(GraphKind::kStructure, s, {}, nullptr);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kState);
  }
}
