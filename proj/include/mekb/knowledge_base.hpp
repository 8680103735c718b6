#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "mekb/engine.hpp"
#include "mekb/hypertree.hpp"
#include "mekb/maxent.hpp"
#include "mekb/parser.hpp"

namespace mekb {

// A compiled knowledge base: source, junction tree, calibrated LEGs and the
// report of the solve that produced them.
struct KnowledgeBase {
  Schema schema;
  std::vector<Rule> rules;
  SolverOptions options;
  FactoredDistribution dist;
  SolveReport report;

  const Hypertree& tree() const { return dist.tree(); }
  KnowledgeBaseSource source() const { return {schema, rules, options}; }
};

// Structure only: hypertree plus uniform LEGs, no rules applied yet.
inline KnowledgeBase prepare(const KnowledgeBaseSource& src) {
  KnowledgeBase kb{src.schema, src.rules, src.options, {}, {}};
  for (const Rule& r : kb.rules) {
    validate_sentence(r.premise, kb.schema);
    validate_sentence(r.conclusion, kb.schema);
  }
  auto tree = std::make_shared<const Hypertree>(
      compile_structure(kb.rules, kb.schema.size(), kb.options.heuristic));
  kb.dist = init_uniform(std::move(tree), kb.schema);
  kb.report.ledger.uniform_entropy_bits = uniform_entropy(kb.schema);
  kb.report.ledger.initial_entropy_bits = kb.report.ledger.uniform_entropy_bits;
  return kb;
}

// Builds the hypertree and solves from the uniform distribution.
inline KnowledgeBase compile(const KnowledgeBaseSource& src,
                             const std::function<void(const SweepProgress&)>& progress = {}) {
  KnowledgeBase kb = prepare(src);
  kb.report = solve(kb.dist, kb.rules, kb.options, kb.schema, progress);
  return kb;
}

}  // namespace mekb
